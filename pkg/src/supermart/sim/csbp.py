"""Multitype CSBP paths via jump-split Euler stepping.

Scheme per step of size ``h`` from state ``X`` (one row per path):

* deterministic part: the exact one-step mean map ``X @ expm(h (Q + diag b))``
  (this, together with compensating large jumps at the start-of-step state,
  makes the scheme's ensemble mean exact, not just first-order accurate);
* small jumps (size <= epsilon) and continuous branching: one Gaussian with
  variance ``(alpha_diff_i + int_0^eps r^2 pi_i) X_i h`` per type;
* large jumps: per type a Poisson count with mean ``X_i h int_eps^inf pi_i``,
  sizes drawn from the normalized tail, compensated by
  ``- X_i h int_eps^inf r pi_i`` (folded into the deterministic part, so the
  compensator can never push a coordinate negative on its own);
* negative coordinates are clipped to 0 (0 is absorbing for the true
  process); the clipped mass is accounted per path and flags the path when
  it exceeds the accuracy budget.

Where the Gaussian scale rivals the mass itself (deterministic part below
six standard deviations) a Gaussian step would be clipped so often that the
accounting budget could not hold, so the increment switches to a compound
Poisson-exponential draw matched to the same mean and variance.  That
distribution is the exact quadratic-branching transition shape: nonnegative,
with a genuine atom at 0, so absorption emerges without clipping.

A step whose drift+diffusion increment moves any live coordinate by more
than 50% is redone with two half steps (fresh noise from the dedicated
rejection stream, so the redo does not disturb any other draw).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from ..model import Model
from ..spectral import Eigentriple, generator_matrix
from .records import CHUNK_PATHS, Ensemble, SimConfig, path_streams

__all__ = ["simulate_csbp", "auto_epsilon"]

_CLIP_BUDGET = 1e-6
_REJECT_FRAC = 0.5
_POIS_VECTOR_CAP = 25.0
_SMALL_Z2 = 36.0  # Gaussian branch needs mean >= 6 sigma to keep clipping negligible


def auto_epsilon(
    model: Model, eig: Eigentriple, x0: np.ndarray, dt: float, horizon: float
) -> float:
    """Split level so the expected large jumps per step stay near 0.1.

    Solves ``tail(eps) * max_mass * dt = 0.1`` with ``max_mass`` the mean
    total mass at the horizon (times a safety factor).  Atom-only models get
    half the smallest atom, which makes every atom a logged large jump.
    """
    from ..model import AtomList, StablePowerLaw

    max_mass = 2.0 * float(np.sum(x0)) * math.exp(max(eig.lam, 0.0) * horizon)
    rate_cap = 0.1 / (max_mass * dt)
    eps = 0.0
    atoms = []
    for kern in model.mech.kernels:
        if isinstance(kern, StablePowerLaw) and kern.gamma > 0:
            eps = max(eps, (kern.gamma / (kern.alpha * rate_cap)) ** (1.0 / kern.alpha))
        elif isinstance(kern, AtomList):
            atoms.extend(r for r, _ in kern.atoms)
    if eps == 0.0:
        eps = 0.5 * min(atoms) if atoms else 1.0
    return eps


def _poisson_counts(u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Poisson inverse CDF, vectorized for small means with a ppf fallback."""
    out = np.zeros(u.shape, dtype=np.int64)
    big = mu > _POIS_VECTOR_CAP
    small = ~big & (mu > 0)
    if small.any():
        us, ms = u[small], mu[small]
        res = np.zeros(us.shape, dtype=np.int64)
        p = np.exp(-ms)
        cdf = p.copy()
        active = us > cdf
        k = 0
        k_cap = int(_POIS_VECTOR_CAP + 12 * math.sqrt(_POIS_VECTOR_CAP) + 30)
        while active.any() and k < k_cap:
            k += 1
            p = p * ms / k
            cdf = cdf + p
            res[active & (us <= cdf)] = k
            active &= us > cdf
        if active.any():  # u in the far numerical tail
            from scipy.stats import poisson

            res[active] = poisson.ppf(us[active], ms[active]).astype(np.int64)
        out[small] = res
    if big.any():
        from scipy.stats import poisson

        out[big] = poisson.ppf(u[big], mu[big]).astype(np.int64)
    return out


class _Immigration:
    """Hook interface for the spine sampler; the plain process uses None.

    ``prepare_chunk`` returns an opaque per-chunk context so that parallel
    chunks never share mutable state.
    """

    extra_uniform_planes = 0

    def prepare_chunk(self, pids, streams):  # pragma: no cover - interface
        raise NotImplementedError

    def step_mass(self, k, x_chunk, u_extra, streams, ctx):  # pragma: no cover
        raise NotImplementedError


def simulate_csbp(
    model: Model,
    eig: Eigentriple,
    cfg: SimConfig,
    x0: np.ndarray | None = None,
    *,
    record_masses: bool = True,
    immigration: _Immigration | None = None,
    threads: int = 1,
) -> Ensemble:
    """Simulate ``cfg.paths`` CSBP paths; see module docstring for the scheme.

    ``x0`` defaults to ``nu`` (so ``<phi, X_0> = 1`` and ``M_0 = 1``).
    """
    d = model.d
    x0 = eig.nu.copy() if x0 is None else np.asarray(x0, dtype=float)
    h = cfg.dt
    n_steps = cfg.n_steps
    eps = cfg.epsilon
    if eps is None:
        eps = auto_epsilon(model, eig, x0, h, cfg.horizon)

    kernels = model.mech.kernels
    rate_large = np.array([k.tail(eps) for k in kernels])
    m1_large = np.array([k.partial_moment(1.0, eps, math.inf) for k in kernels])
    m2_small = np.array([k.partial_moment(2.0, 0.0, eps) for k in kernels])
    diff_coef = model.mech.alpha_diff + m2_small
    rate_h = rate_large * h
    m1_h = m1_large * h
    diff_h = diff_coef * h
    has_jumps = bool((rate_large > 0).any())

    gen = generator_matrix(model)
    prop = linalg.expm(h * gen)
    prop_half = linalg.expm(0.5 * h * gen)
    prop_scalar = float(prop[0, 0]) if d == 1 else None

    rec_idx = list(range(0, n_steps + 1, cfg.record_stride))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    rec_pos = {step: j for j, step in enumerate(rec_idx)}
    n_rec = len(rec_idx)
    times = np.array(rec_idx, dtype=float) * h

    masses = np.empty((cfg.paths, n_rec, d)) if record_masses else None
    m_out = np.empty((cfg.paths, n_rec))
    clipped = np.zeros(cfg.paths)
    jumps: list | None = [None] * cfg.paths if cfg.log_jumps else None

    floor_mass = 1e-9 * float(np.sum(x0))
    total0 = float(np.sum(x0))

    chunks = [
        range(start, min(start + CHUNK_PATHS, cfg.paths))
        for start in range(0, cfg.paths, CHUNK_PATHS)
    ]

    # uniform plane layout per step: large-jump counts (only when the model
    # jumps), then near-absorption counts, then immigration counts
    n_jump_planes = d if has_jumps else 0
    small_lo = n_jump_planes

    def run_chunk(pids):
        c = len(pids)
        streams = [path_streams(cfg.master_seed, pid) for pid in pids]
        extra = immigration.extra_uniform_planes if immigration is not None else 0
        n_planes = n_jump_planes + d + extra
        g = np.empty((c, n_steps, d))
        u = np.empty((c, n_steps, n_planes))
        for j, st in enumerate(streams):
            g[j] = st["gauss"].standard_normal((n_steps, d))
            u[j] = st["counts"].random((n_steps, n_planes))
        imm_ctx = immigration.prepare_chunk(pids, streams) if immigration is not None else None

        x = np.tile(x0, (c, 1))
        clip_acc = np.zeros(c)
        jump_logs = [[] for _ in range(c)] if cfg.log_jumps else None
        mass_rec = np.empty((c, n_rec, d))
        mass_rec[:, 0, :] = x

        for k in range(n_steps):
            # deterministic mean part with the large-jump compensator folded in
            det = x * prop_scalar if prop_scalar is not None else x @ prop
            if has_jumps:
                det = det - x * m1_h
            var = diff_h * x
            small = det * det < _SMALL_Z2 * var
            x_new = det + np.sqrt(var) * g[:, k, :]

            # rejection redo (Gaussian branch only): increment beyond 50%
            bad = (np.abs(x_new - x) > _REJECT_FRAC * x + floor_mass) & ~small
            if bad.any():
                for j in np.nonzero(bad.any(axis=1))[0]:
                    y = x[j]
                    rng = streams[j]["reject"]
                    for _ in range(2):
                        y = y @ prop_half - y * (0.5 * m1_h)
                        y = y + np.sqrt(0.5 * diff_h * y) * rng.standard_normal(d)
                        clip_acc[j] -= np.minimum(y, 0.0).sum()
                        y = np.maximum(y, 0.0)
                    x_new[j] = y

            # near-absorption branch: matched compound Poisson-exponential
            if small.any():
                rows = np.nonzero(small.any(axis=1))[0]
                small_s = small[rows]
                det_s = det[rows]
                var_s = var[rows]
                me = np.where(small_s, det_s, 0.0)
                lam_s = np.where(
                    small_s & (me > 0.0), 2.0 * me * me / np.maximum(var_s, 1e-300), 0.0
                )
                n_exp = _poisson_counts(u[rows, k, small_lo : small_lo + d], lam_s)
                xn_s = x_new[rows]
                xn_s[small_s] = 0.0
                clip_acc[rows] -= np.where(small_s, np.minimum(det_s, 0.0), 0.0).sum(axis=1)
                for jj, i in zip(*np.nonzero(n_exp)):
                    j = rows[jj]
                    xn_s[jj, i] = streams[j]["reject"].gamma(
                        n_exp[jj, i], var_s[jj, i] / (2.0 * det_s[jj, i])
                    )
                x_new[rows] = xn_s

            if has_jumps:
                counts = _poisson_counts(u[:, k, :d], x * rate_h)
                if counts.any():
                    t_left = k * h
                    for j, i in zip(*np.nonzero(counts)):
                        n = int(counts[j, i])
                        rng = streams[j]["sizes"]
                        sizes = kernels[i].sample_tail_many(eps, n, rng)
                        x_new[j, i] += sizes.sum()
                        if cfg.log_jumps:
                            t_jump = t_left + h * rng.random(n)
                            for tt, rr in zip(t_jump, sizes):
                                jump_logs[j].append((tt, i, rr))

            if immigration is not None:
                x_new = x_new + immigration.step_mass(k, x, u[:, k, d:], streams, imm_ctx)
            neg = x_new < 0
            if neg.any():
                clip_acc -= np.where(neg, x_new, 0.0).sum(axis=1)
                x = np.maximum(x_new, 0.0)
            else:
                x = x_new
            pos = rec_pos.get(k + 1)
            if pos is not None:
                mass_rec[:, pos, :] = x

        m_chunk = np.exp(-eig.lam * times)[None, :] * (mass_rec @ eig.phi)
        return pids, mass_rec, m_chunk, clip_acc, jump_logs

    if threads > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run_chunk, chunks))
    else:
        results = [run_chunk(pids) for pids in chunks]

    for pids, mass_rec, m_chunk, clip_acc, jump_logs in results:
        sl = slice(pids.start, pids.stop)
        if record_masses:
            masses[sl] = mass_rec
        m_out[sl] = m_chunk
        clipped[sl] = clip_acc
        if cfg.log_jumps:
            for j, pid in enumerate(pids):
                if jump_logs[j]:
                    arr = np.array(jump_logs[j], dtype=float)
                    jumps[pid] = arr[np.argsort(arr[:, 0], kind="stable")]
                else:
                    jumps[pid] = np.empty((0, 3))

    flagged = clipped > _CLIP_BUDGET * total0 * cfg.horizon
    return Ensemble(
        times=times,
        M=m_out,
        masses=masses,
        lam=eig.lam,
        phi=eig.phi,
        clipped=clipped,
        flagged=flagged,
        jumps=jumps,
    )
