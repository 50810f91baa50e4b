"""Galton-Watson path generation with exact offspring sums.

For bounded offspring laws one generation is a single multinomial draw.  For
zeta-tailed laws the population sum is sampled exactly even when it is far
too large to draw individual offspring: small populations use direct zipf
draws, large ones use a value-binned multinomial (exact head bins 1..K plus
dyadic tail blocks with Hurwitz-zeta probabilities, block values filled in by
rejection against a uniform proposal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import zeta as _hzeta

from ..model import GWModel
from .records import path_streams

__all__ = ["GWEnsemble", "simulate_gw"]

_INT_CAP = 2**63 - 1
_DIRECT_LIMIT = 8192  # below this, draw offspring individually
_BLOCK_CAP = 2**62


@dataclass
class GWEnsemble:
    """Normalized population trajectories ``W_k = Z_k / m^k``."""

    W: np.ndarray  # (paths, n_generations + 1)
    flagged: np.ndarray  # overflow-capped paths, excluded from estimates
    mean: float

    @property
    def n_paths(self) -> int:
        return self.W.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.W.shape[1], dtype=float)

    # Ensemble protocol used by the rates module: M plays the role of the
    # martingale, the horizon is the last generation.
    @property
    def M(self) -> np.ndarray:
        return self.W

    @property
    def lam(self) -> float:
        return math.log(self.mean)

    @property
    def horizon(self) -> float:
        return float(self.W.shape[1] - 1)


@lru_cache(maxsize=32)
def _zeta_plan(alpha: float, head: int):
    """Binned pmf for the zeta(1+alpha) law: head values and dyadic blocks."""
    s = 1.0 + alpha
    z = float(_hzeta(s, 1))
    ks = np.arange(1, head + 1, dtype=float)
    head_p = ks**-s / z
    blocks = []
    lo = head + 1
    while lo <= _BLOCK_CAP:
        hi = min(2 * (lo - 1), _BLOCK_CAP)
        p = (float(_hzeta(s, lo)) - float(_hzeta(s, hi + 1))) / z
        blocks.append((lo, hi, p))
        lo = hi + 1
    pvals = np.concatenate([head_p, [b[2] for b in blocks]])
    pvals = pvals / pvals.sum()
    return ks.astype(np.int64), blocks, pvals


def _sample_block(lo: int, hi: int, n: int, s: float, rng: np.random.Generator) -> np.ndarray:
    """n exact draws from pmf ~ k^-s restricted to [lo, hi], by rejection."""
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        m = max(16, 2 * (n - filled))
        k = rng.integers(lo, hi + 1, size=m)
        accept = rng.random(m) < (k / lo) ** (-s)
        k = k[accept][: n - filled]
        out[filled : filled + len(k)] = k
        filled += len(k)
    return out


def _powerlaw_generation(n_parents: int, alpha: float, rng: np.random.Generator) -> int:
    """Exact total offspring of ``n_parents`` zeta(1+alpha) individuals.

    Returns the overflow cap directly for populations so large that the
    int64 accumulation could wrap.
    """
    if n_parents > _INT_CAP // 4096:
        return _INT_CAP
    if n_parents <= _DIRECT_LIMIT:
        total = int(rng.zipf(1.0 + alpha, size=n_parents).sum())
        return total if total >= 0 else _INT_CAP
    # pick the head size balancing multinomial cost against tail draws
    head = int(min(4096, max(64, round(n_parents ** (1.0 / (1.0 + alpha))))))
    head = 1 << int(math.ceil(math.log2(head)))
    ks, blocks, pvals = _zeta_plan(alpha, head)
    counts = rng.multinomial(n_parents, pvals)
    total = int(np.dot(ks, counts[: len(ks)]))
    s = 1.0 + alpha
    for (lo, hi, _), c in zip(blocks, counts[len(ks) :]):
        if c > 0:
            total += int(_sample_block(lo, hi, int(c), s, rng).astype(object).sum())
    return total if 0 <= total <= _INT_CAP else _INT_CAP


def _bounded_generation(n_parents: int, pmf: np.ndarray, rng: np.random.Generator) -> int:
    if n_parents > _INT_CAP // max(len(pmf) - 1, 1):
        return _INT_CAP
    counts = rng.multinomial(n_parents, pmf)
    return int(np.dot(np.arange(len(pmf)), counts))


def simulate_gw(gw: GWModel, generations: int, paths: int, seed: int) -> GWEnsemble:
    """Per-path trajectories of ``W_k``, absorbing at 0, overflow-flagged.

    Populations are capped at ``2**63 - 1``; a capped path is flagged and
    should be excluded from estimates.
    """
    m = gw.mean()
    pmf = np.asarray(gw.pmf, dtype=float) if gw.pmf is not None else None
    if pmf is not None:
        pmf = pmf / pmf.sum()
    w = np.empty((paths, generations + 1))
    flagged = np.zeros(paths, dtype=bool)
    norms = m ** -np.arange(generations + 1, dtype=float)
    for pid in range(paths):
        rng = path_streams(seed, pid)["counts"]
        z = 1
        w[pid, 0] = 1.0
        for gen in range(1, generations + 1):
            if z > 0:
                if pmf is not None:
                    z_next = _bounded_generation(z, pmf, rng)
                else:
                    z_next = _powerlaw_generation(z, gw.alpha, rng)
                if z_next >= _INT_CAP:
                    z_next = _INT_CAP
                    flagged[pid] = True
                z = z_next
            w[pid, gen] = z * norms[gen]
    return GWEnsemble(W=w, flagged=flagged, mean=m)
