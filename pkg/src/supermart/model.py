"""Finite-type branching models: type space, spatial motion, jump kernels.

A model bundles a finite type space (types ``1..d``, stored ``0``-indexed), a
conservative rate matrix for the spatial motion, and a per-type branching
mechanism ``(beta, alpha_diff, jump kernel)``.  Two kernel families are
supported:

* ``StablePowerLaw(gamma, alpha)`` -- density ``gamma * r**(-1-alpha)`` on
  ``(0, inf)`` with ``alpha`` in ``(1, 2)``; every moment integral used by the
  moment criteria has a closed form.
* ``AtomList(atoms)`` -- finitely many atoms ``(r_k, w_k)``; integrals are
  finite sums, which makes atom kernels exact oracles for the transform
  identities.

Divergent integrals return ``math.inf`` rather than raising: divergence is a
meaningful verdict for the rate criteria downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelValidationError

__all__ = [
    "TypeSpace",
    "RateMatrix",
    "StablePowerLaw",
    "AtomList",
    "BranchingMechanism",
    "Model",
    "GWModel",
    "ValidationReport",
    "validate_model",
    "kernel_tail",
    "kernel_partial_moment",
    "phi_tail",
    "phi_partial_moment",
    "sample_large_jump",
    "model_to_json",
    "model_from_json",
    "gw_to_json",
    "gw_from_json",
]

_ROW_SUM_TOL = 1e-10


@dataclass(frozen=True)
class TypeSpace:
    """Finite type space with ``d`` types."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ModelValidationError("type space needs d >= 1")


@dataclass(frozen=True)
class RateMatrix:
    """Conservative CTMC rate matrix (off-diagonal >= 0, zero row sums)."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ModelValidationError("rate matrix must be square")
        object.__setattr__(self, "q", q)
        self.q.setflags(write=False)

    @property
    def d(self) -> int:
        return self.q.shape[0]

    def row_sum_defects(self) -> np.ndarray:
        return self.q.sum(axis=1)

    def offdiag_negative(self) -> bool:
        off = self.q - np.diag(np.diag(self.q))
        return bool((off < -_ROW_SUM_TOL).any())

    def is_irreducible(self) -> bool:
        """Strong connectivity of the off-diagonal support graph."""
        from scipy.sparse import csgraph, csr_matrix

        d = self.d
        if d == 1:
            return True
        support = (self.q > 0).astype(np.int8)
        np.fill_diagonal(support, 0)
        n, _ = csgraph.connected_components(csr_matrix(support), connection="strong")
        return n == 1


@dataclass(frozen=True)
class StablePowerLaw:
    """Kernel ``pi(dr) = gamma * r**(-1-alpha) dr`` on ``(0, inf)``."""

    gamma: float
    alpha: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ModelValidationError("stable kernel needs gamma >= 0")
        if not (1.0 < self.alpha < 2.0):
            raise ModelValidationError("stable kernel needs alpha in (1, 2)")

    def tail(self, t: float) -> float:
        """``integral_t^inf pi(dr)`` = ``gamma * t**(-alpha) / alpha``."""
        if self.gamma == 0.0:
            return 0.0
        return self.gamma * t ** (-self.alpha) / self.alpha

    def partial_moment(self, k: float, lo: float, hi: float) -> float:
        """``integral_lo^hi r**k pi(dr)``; ``inf`` on divergence."""
        if self.gamma == 0.0:
            return 0.0
        s = k - self.alpha  # integrand r**(s-1)
        if hi == math.inf:
            if s >= 0.0:
                return math.inf
            if lo == 0.0:
                return math.inf
            return self.gamma * lo**s / (-s)
        if lo == 0.0:
            if s <= 0.0:
                return math.inf
            return self.gamma * hi**s / s
        if s == 0.0:
            return self.gamma * math.log(hi / lo)
        return self.gamma * (hi**s - lo**s) / s

    def rmin_r2(self) -> float:
        """``integral (r wedge r^2) pi(dr)``, the boundedness functional."""
        return self.gamma * (1.0 / (2.0 - self.alpha) + 1.0 / (self.alpha - 1.0))

    def sample_tail(self, eps: float, rng: np.random.Generator) -> float:
        """One draw from ``pi`` restricted to ``(eps, inf)``, normalized."""
        u = rng.random()
        return eps * (1.0 - u) ** (-1.0 / self.alpha)

    def sample_tail_many(self, eps: float, n: int, rng: np.random.Generator) -> np.ndarray:
        return eps * (1.0 - rng.random(n)) ** (-1.0 / self.alpha)

    def sample_size_biased_tail(self, eps: float, rng: np.random.Generator) -> float:
        """One draw from ``r pi(dr)`` restricted to ``(eps, inf)``, normalized.

        Density ``propto r**(-alpha)`` there, so the tail index is ``alpha-1``.
        """
        u = rng.random()
        return eps * (1.0 - u) ** (-1.0 / (self.alpha - 1.0))


@dataclass(frozen=True)
class AtomList:
    """Kernel ``pi = sum_k w_k * delta_{r_k}`` with finitely many atoms."""

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(r), float(w)) for r, w in self.atoms)
        for r, w in atoms:
            if r <= 0 or w <= 0:
                raise ModelValidationError("atoms need r > 0 and w > 0")
        object.__setattr__(self, "atoms", atoms)

    def tail(self, t: float) -> float:
        return sum(w for r, w in self.atoms if r > t)

    def partial_moment(self, k: float, lo: float, hi: float) -> float:
        return sum(w * r**k for r, w in self.atoms if lo < r <= hi)

    def rmin_r2(self) -> float:
        return sum(w * min(r, r * r) for r, w in self.atoms)

    def sample_tail(self, eps: float, rng: np.random.Generator) -> float:
        live = [(r, w) for r, w in self.atoms if r > eps]
        total = sum(w for _, w in live)
        if total <= 0:
            raise ModelValidationError(f"empty tail: no atoms above {eps}")
        u = rng.random() * total
        acc = 0.0
        for r, w in live:
            acc += w
            if u <= acc:
                return r
        return live[-1][0]

    def sample_tail_many(self, eps: float, n: int, rng: np.random.Generator) -> np.ndarray:
        live = [(r, w) for r, w in self.atoms if r > eps]
        total = sum(w for _, w in live)
        if total <= 0:
            raise ModelValidationError(f"empty tail: no atoms above {eps}")
        rs = np.array([r for r, _ in live])
        cum = np.cumsum([w for _, w in live])
        idx = np.searchsorted(cum, rng.random(n) * total, side="left")
        return rs[np.minimum(idx, len(rs) - 1)]

    def sample_size_biased_tail(self, eps: float, rng: np.random.Generator) -> float:
        live = [(r, w * r) for r, w in self.atoms if r > eps]
        total = sum(w for _, w in live)
        if total <= 0:
            raise ModelValidationError(f"empty tail: no atoms above {eps}")
        u = rng.random() * total
        acc = 0.0
        for r, w in live:
            acc += w
            if u <= acc:
                return r
        return live[-1][0]


JumpKernel = StablePowerLaw | AtomList


@dataclass(frozen=True)
class BranchingMechanism:
    """Per-type branching data: drift ``beta``, diffusion ``alpha_diff``, kernels."""

    beta: np.ndarray
    alpha_diff: np.ndarray
    kernels: tuple

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        alpha_diff = np.asarray(self.alpha_diff, dtype=float)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_diff", alpha_diff)
        object.__setattr__(self, "kernels", tuple(self.kernels))
        self.beta.setflags(write=False)
        self.alpha_diff.setflags(write=False)

    @property
    def d(self) -> int:
        return len(self.kernels)


@dataclass(frozen=True)
class Model:
    """A finite-type ``(motion, branching mechanism)`` pair."""

    space: TypeSpace
    motion: RateMatrix
    mech: BranchingMechanism

    def __post_init__(self):
        d = self.space.d
        if self.motion.d != d or self.mech.d != d:
            raise ModelValidationError("dimension mismatch between motion and mechanism")
        if len(self.mech.beta) != d or len(self.mech.alpha_diff) != d:
            raise ModelValidationError("beta/alpha_diff length must equal d")

    @property
    def d(self) -> int:
        return self.space.d


@dataclass(frozen=True)
class GWModel:
    """Galton-Watson offspring law: finite pmf or zeta-tailed power law.

    ``pmf`` holds ``(p_0, ..., p_K)``.  The power-law variant has
    ``P(Z=k) = k**(-1-alpha) / zeta(1+alpha)`` for ``k >= 1``.
    """

    pmf: tuple | None = None
    alpha: float | None = None

    def __post_init__(self):
        if (self.pmf is None) == (self.alpha is None):
            raise ModelValidationError("give exactly one of pmf or alpha")
        if self.pmf is not None:
            pmf = tuple(float(p) for p in self.pmf)
            if any(p < 0 for p in pmf):
                raise ModelValidationError("offspring probabilities must be >= 0")
            if abs(sum(pmf) - 1.0) > 1e-12:
                raise ModelValidationError("offspring pmf must sum to 1 within 1e-12")
            object.__setattr__(self, "pmf", pmf)
        else:
            if not (1.0 < self.alpha < 2.0):
                raise ModelValidationError("power-law offspring needs alpha in (1, 2)")
        if self.mean() <= 1.0:
            raise ModelValidationError("offspring mean must exceed 1 (supercritical)")

    def mean(self) -> float:
        if self.pmf is not None:
            return sum(k * p for k, p in enumerate(self.pmf))
        from scipy.special import zeta

        return float(zeta(self.alpha) / zeta(1.0 + self.alpha))

    def moment(self, p: float) -> float:
        """``E[Z^p]``; ``inf`` for power-law offspring with ``p >= alpha``."""
        if self.pmf is not None:
            return sum((k**p) * w for k, w in enumerate(self.pmf) if k > 0)
        if p >= self.alpha:
            return math.inf
        from scipy.special import zeta

        return float(zeta(1.0 + self.alpha - p) / zeta(1.0 + self.alpha))

    def zlogz(self) -> float:
        """``E[Z log Z]`` (finite for every supported law)."""
        if self.pmf is not None:
            return sum(k * math.log(k) * w for k, w in enumerate(self.pmf) if k > 1)
        from scipy.special import zeta

        # sum k^-alpha log(k) / zeta(1+alpha) = -zeta'(alpha)/zeta(1+alpha)
        a = self.alpha
        h = 1e-6
        dz = (zeta(a + h) - zeta(a - h)) / (2 * h)
        return float(-dz / zeta(1.0 + a))


# ---------------------------------------------------------------------------
# kernel operations


@dataclass
class ValidationReport:
    """Structured outcome of `validate_model`; never raises."""

    ok: bool
    rmin_r2: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"ok": self.ok, "rmin_r2": self.rmin_r2, "failures": self.failures}


def validate_model(model: Model) -> ValidationReport:
    """Check the structural assumptions that make a model usable.

    Reports the per-type value of ``integral (r wedge r^2) pi_i(dr)`` and
    collects failures (non-conservative motion, negative rates, reducibility)
    instead of aborting.  Supercriticality (``lambda > 0``) is checked later
    by the spectral layer.
    """
    failures = []
    defects = model.motion.row_sum_defects()
    if np.max(np.abs(defects)) > _ROW_SUM_TOL:
        failures.append(f"non-conservative motion: row sums {defects.tolist()}")
    if model.motion.offdiag_negative():
        failures.append("negative off-diagonal motion rate")
    if not model.motion.is_irreducible():
        failures.append("reducible motion: Perron triple is not unique")
    if (model.mech.alpha_diff < 0).any():
        failures.append("alpha_diff must be >= 0")
    vals = [k.rmin_r2() for k in model.mech.kernels]
    for i, v in enumerate(vals):
        if not math.isfinite(v):
            failures.append(f"type {i}: (r wedge r^2) integral diverges")
    return ValidationReport(ok=not failures, rmin_r2=vals, failures=failures)


def kernel_tail(model: Model, i: int, t: float) -> float:
    """``integral_t^inf pi_i(dr)`` for ``t > 0``."""
    if t <= 0:
        raise ValueError("kernel_tail needs t > 0")
    return model.mech.kernels[i].tail(t)


def kernel_partial_moment(model: Model, i: int, k: float, lo: float, hi: float) -> float:
    """``integral_lo^hi r**k pi_i(dr)``; ``inf`` when divergent."""
    if not (0.0 <= lo < hi):
        raise ValueError("need 0 <= lo < hi")
    return model.mech.kernels[i].partial_moment(k, lo, hi)


def phi_tail(model: Model, eig, i: int, t: float) -> float:
    """Tail of the ``phi``-rescaled kernel: ``integral_t^inf pi_i^phi(dr)``.

    By the change of variables, this is ``kernel_tail(i, t / phi_i)``.
    """
    if t <= 0:
        raise ValueError("phi_tail needs t > 0")
    p = float(eig.phi[i])
    if p <= 0:
        raise ValueError("phi must be strictly positive")
    return model.mech.kernels[i].tail(t / p)


def phi_partial_moment(model: Model, eig, i: int, k: float, lo: float, hi: float) -> float:
    """``integral_lo^hi r**k pi_i^phi(dr)`` via the exact substitution r -> r*phi_i."""
    p = float(eig.phi[i])
    hi_s = hi / p if hi != math.inf else math.inf
    base = model.mech.kernels[i].partial_moment(k, lo / p, hi_s)
    if not math.isfinite(base):
        return base
    return p**k * base


def sample_large_jump(model: Model, i: int, threshold: float, rng: np.random.Generator) -> float:
    """One jump size from ``pi_i`` restricted to ``(threshold, inf)``.

    Raises when the kernel carries no mass above the threshold.
    """
    kern = model.mech.kernels[i]
    if kern.tail(threshold) <= 0:
        raise ModelValidationError(f"empty tail: no kernel mass above {threshold}")
    return kern.sample_tail(threshold, rng)


# ---------------------------------------------------------------------------
# JSON wire format (bit-exact keys)


def _kernel_to_json(kern: JumpKernel) -> dict:
    if isinstance(kern, StablePowerLaw):
        return {"kind": "stable", "gamma": kern.gamma, "alpha": kern.alpha}
    return {"kind": "atoms", "atoms": [[r, w] for r, w in kern.atoms]}


def _kernel_from_json(obj: dict) -> JumpKernel:
    kind = obj.get("kind")
    if kind == "stable":
        return StablePowerLaw(gamma=obj["gamma"], alpha=obj["alpha"])
    if kind == "atoms":
        return AtomList(atoms=tuple((r, w) for r, w in obj["atoms"]))
    raise ModelValidationError(f"unknown kernel kind: {kind!r}")


def model_to_json(model: Model) -> dict:
    return {
        "types": model.d,
        "Q": model.motion.q.tolist(),
        "beta": model.mech.beta.tolist(),
        "alpha": model.mech.alpha_diff.tolist(),
        "kernels": [_kernel_to_json(k) for k in model.mech.kernels],
    }


def model_from_json(obj: dict | str) -> Model:
    if isinstance(obj, str):
        obj = json.loads(obj)
    d = int(obj["types"])
    return Model(
        space=TypeSpace(d=d),
        motion=RateMatrix(q=np.asarray(obj["Q"], dtype=float)),
        mech=BranchingMechanism(
            beta=np.asarray(obj["beta"], dtype=float),
            alpha_diff=np.asarray(obj["alpha"], dtype=float),
            kernels=tuple(_kernel_from_json(k) for k in obj["kernels"]),
        ),
    )


def gw_to_json(gw: GWModel) -> dict:
    if gw.pmf is not None:
        return {"kind": "gw", "pmf": list(gw.pmf)}
    return {"kind": "gw_powerlaw", "alpha": gw.alpha}


def gw_from_json(obj: dict | str) -> GWModel:
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind")
    if kind == "gw":
        return GWModel(pmf=tuple(obj["pmf"]))
    if kind == "gw_powerlaw":
        return GWModel(alpha=float(obj["alpha"]))
    raise ModelValidationError(f"unknown GW kind: {kind!r}")
