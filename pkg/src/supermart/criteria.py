"""Moment criteria and theorem-level predictions for a model + eigentriple.

Every criterion is an integral against the ``phi``-rescaled kernel
``pi^phi``, averaged over the left eigenmeasure ``nu``.  Closed forms are
used for both kernel families (power-law integrals for the stable kernel,
finite sums for atoms); ``math.inf`` is a first-class verdict and propagates
through reports.

The criteria evaluated here, with the downstream prediction each one drives:

* ``llogl``            -- L log L integral; finite iff the martingale limit
                          is nondegenerate.
* ``p_moment(p)``      -- p-th moment tail, p in (1, 2]; finite implies the
                          almost-sure rate exp(-lambda t / q), 1/p + 1/q = 1.
* ``log_moment(g)``    -- r (log r)^(g+1) integral; finite implies the
                          polynomial rate t^(-g).
* ``uniform_tail_B``   -- uniform upper bound on per-type tails; under it an
                          infinite p-moment makes the exponential rate fail.
* ``lower_bound_b``    -- uniform lower bound on first-moment tails over a
                          seed set F; under it an infinite log-moment makes
                          the series criterion fail.
* ``inf_log_condition``-- the borderline o((log t)^-g) condition separating
                          the polynomial rate from its failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import GWModel, Model, StablePowerLaw
from .spectral import Eigentriple

__all__ = [
    "CriteriaReport",
    "Predictions",
    "llogl",
    "p_moment",
    "log_moment",
    "uniform_tail_B",
    "lower_bound_b",
    "inf_log_condition",
    "theorem_predictions",
    "evaluate_criteria",
    "gw_predictions",
    "conjugate",
]

_GRID_PER_DECADE = 60
_GRID_HI = 1e6


def conjugate(p: float) -> float:
    """Conjugate exponent ``q`` with ``1/p + 1/q = 1``."""
    if p <= 1.0:
        raise ValueError("conjugate needs p > 1")
    return p / (p - 1.0)


# ---------------------------------------------------------------------------
# per-type closed forms for integrals of f(r) pi^phi(dr) over (1, inf)


def _type_llogl(kern, phi_i: float) -> float:
    if isinstance(kern, StablePowerLaw):
        if kern.gamma == 0.0:
            return 0.0
        return kern.gamma * phi_i**kern.alpha / (kern.alpha - 1.0) ** 2
    return sum(w * (r * phi_i) * math.log(r * phi_i) for r, w in kern.atoms if r * phi_i > 1.0)


def _type_p_moment(kern, phi_i: float, p: float) -> float:
    if isinstance(kern, StablePowerLaw):
        if kern.gamma == 0.0:
            return 0.0
        if p >= kern.alpha:
            return math.inf
        return kern.gamma * phi_i**kern.alpha / (kern.alpha - p)
    return sum(w * (r * phi_i) ** p for r, w in kern.atoms if r * phi_i > 1.0)


def _type_log_moment(kern, phi_i: float, g: float) -> float:
    if isinstance(kern, StablePowerLaw):
        if kern.gamma == 0.0:
            return 0.0
        a = kern.alpha
        return kern.gamma * phi_i**a * math.gamma(g + 2.0) / (a - 1.0) ** (g + 2.0)
    return sum(
        w * (r * phi_i) * math.log(r * phi_i) ** (g + 1.0)
        for r, w in kern.atoms
        if r * phi_i > 1.0
    )


def _type_first_moment_tail(kern, phi_i: float, t: float) -> float:
    """``integral_t^inf r pi^phi(dr)``."""
    if isinstance(kern, StablePowerLaw):
        if kern.gamma == 0.0:
            return 0.0
        a = kern.alpha
        return kern.gamma * phi_i**a * t ** (1.0 - a) / (a - 1.0)
    return sum(w * (r * phi_i) for r, w in kern.atoms if r * phi_i > t)


def _type_excess_log_tail(kern, phi_i: float, t: float) -> float:
    """``integral_t^inf r (log r - log t) pi^phi(dr)``."""
    if isinstance(kern, StablePowerLaw):
        if kern.gamma == 0.0:
            return 0.0
        a = kern.alpha
        return kern.gamma * phi_i**a * t ** (1.0 - a) / (a - 1.0) ** 2
    return sum(
        w * (r * phi_i) * (math.log(r * phi_i) - math.log(t))
        for r, w in kern.atoms
        if r * phi_i > t
    )


def _nu_average(model: Model, eig: Eigentriple, per_type) -> float:
    total = 0.0
    for i in range(model.d):
        v = per_type(model.mech.kernels[i], float(eig.phi[i]))
        if math.isinf(v):
            return math.inf
        total += float(eig.nu[i]) * v
    return total


# ---------------------------------------------------------------------------
# criteria


def llogl(model: Model, eig: Eigentriple) -> float:
    """``integral nu(dy) integral_1^inf r log r pi^phi(y, dr)``."""
    return _nu_average(model, eig, _type_llogl)


def p_moment(model: Model, eig: Eigentriple, p: float) -> float:
    """``integral nu(dy) integral_1^inf r^p pi^phi(y, dr)`` for p in (1, 2]."""
    if not (1.0 < p <= 2.0):
        raise ValueError("p must lie in (1, 2]")
    return _nu_average(model, eig, lambda k, f: _type_p_moment(k, f, p))


def log_moment(model: Model, eig: Eigentriple, gamma: float) -> float:
    """``integral nu(dx) integral_1^inf r (log r)^(gamma+1) pi^phi(x, dr)``."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    return _nu_average(model, eig, lambda k, f: _type_log_moment(k, f, gamma))


def _log_grid(t0: float, hi: float = _GRID_HI) -> np.ndarray:
    decades = math.log10(hi / t0)
    n = max(2, int(math.ceil(decades * _GRID_PER_DECADE)))
    return np.geomspace(t0 * (1.0 + 1e-9), hi, n)


def uniform_tail_B(model: Model, eig: Eigentriple, t0: float = 10.0) -> float:
    """Best constant in the uniform tail bound, taken as a sup over a log grid.

    ``B(t) = sup_x [(1/phi_x) * tail^phi_x(t)] / [sum_y nu_y tail^phi_y(t)]``;
    the reported value is ``sup_{t in (t0, 1e6]} B(t)``.  For a pure stable
    model the ratio is t-independent.  Returns ``inf`` when the denominator
    vanishes while some numerator does not (the bound fails).
    """
    from .model import phi_tail

    best = 0.0
    for t in _log_grid(t0):
        tails = np.array([phi_tail(model, eig, i, t) for i in range(model.d)])
        num = np.max(tails / eig.phi)
        den = float(eig.nu @ tails)
        if den <= 0.0:
            if num > 0.0:
                return math.inf
            continue
        best = max(best, float(num / den))
    return best


def lower_bound_b(model: Model, eig: Eigentriple, f_set, t1: float = 10.0) -> float:
    """Best constant in the lower first-moment-tail bound over the set ``f_set``.

    ``b(t) = inf_{x in F} [(1/phi_x) integral_t^inf r pi^phi_x] /
    [sum_y nu_y integral_t^inf r pi^phi_y]``; reported as the inf over the
    log grid.  Returns 0 when the bound collapses (condition fails).
    """
    f_idx = sorted(set(int(i) for i in f_set))
    if not f_idx:
        raise ValueError("F must be nonempty")
    if float(sum(eig.nu[i] for i in f_idx)) <= 0.0:
        raise ValueError("nu(F) must be positive")
    best = math.inf
    for t in _log_grid(t1):
        tails = np.array(
            [
                _type_first_moment_tail(model.mech.kernels[i], float(eig.phi[i]), t)
                for i in range(model.d)
            ]
        )
        den = float(eig.nu @ tails)
        num = min(tails[i] / float(eig.phi[i]) for i in f_idx)
        if den <= 0.0:
            # no tail mass anywhere: the bound holds vacuously at this t
            continue
        best = min(best, float(num / den))
    if math.isinf(best):
        return 0.0
    return best


def inf_log_condition(
    model: Model, eig: Eigentriple, gamma: float, t_grid=None, tol: float = 0.05
) -> dict:
    """Evaluate the borderline condition: the excess-log tail times (log t)^gamma.

    Returns the curve of the product over ``t_grid`` and the verdict "holds"
    when the product has decayed below ``tol`` times its peak by the end of
    the grid (a curve that is identically zero holds trivially; one that
    stays near or above its peak fails).
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if t_grid is None:
        t_grid = np.geomspace(10.0, 1e8, 34)
    t_grid = np.asarray(t_grid, dtype=float)
    prods = []
    for t in t_grid:
        v = _nu_average(model, eig, lambda k, f: _type_excess_log_tail(k, f, t))
        prods.append(v * math.log(t) ** gamma)
    prods = np.asarray(prods)
    peak = float(prods.max(initial=0.0))
    if peak == 0.0:
        verdict = "holds"
    elif prods[-1] <= tol * peak:
        verdict = "holds"
    else:
        # borderline-slow decay (alpha near 1): judge the log-log tail trend;
        # any power-law factor t^{1-alpha} eventually drives the slope below 0
        tail = slice(len(prods) // 2, None)
        y = prods[tail]
        if (y <= 0).any():
            verdict = "holds"
        else:
            x = np.log(t_grid[tail])
            slope = float(np.polyfit(x, np.log(y), 1)[0])
            verdict = "holds" if slope <= -0.02 else "fails"
    return {"verdict": verdict, "grid": t_grid, "product": prods, "peak": peak}


# ---------------------------------------------------------------------------
# reports and predictions


@dataclass
class Predictions:
    """Theorem-level verdicts derived from a criteria report."""

    nondegenerate: bool
    per_p: list = field(default_factory=list)
    per_gamma: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "nondegenerate": self.nondegenerate,
            "per_p": self.per_p,
            "per_gamma": self.per_gamma,
        }


@dataclass
class CriteriaReport:
    """Numeric values and finiteness verdicts for every moment condition."""

    llogl: float
    p_moments: dict
    log_moments: dict
    B: float
    b: float
    inf_log: dict
    lam: float
    predictions: Predictions | None = None

    def as_dict(self) -> dict:
        out = {
            "llogl": self.llogl,
            "p_moments": {str(k): v for k, v in self.p_moments.items()},
            "log_moments": {str(k): v for k, v in self.log_moments.items()},
            "B": self.B,
            "b": self.b,
            "inf_log": {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.inf_log.items()
            },
            "lambda": self.lam,
        }
        if self.predictions is not None:
            out["predictions"] = self.predictions.as_dict()
        return out


def theorem_predictions(report: CriteriaReport, p_values=(), gamma_values=()) -> Predictions:
    """Turn criteria values into the rate verdicts the ensemble checks test.

    For each ``p``: the L^p-norm decay exponent is ``lambda/q`` (the boundary
    of the o(exp(-lambda t / a*)) family over a < p), the almost-sure rate
    ``exp(-lambda t / q)`` holds iff the p-moment is finite, and its failure
    is expected when additionally the uniform tail bound holds (finite B).
    For each ``gamma``: the polynomial rate ``t^-gamma`` and the series
    criterion hold when the log-moment is finite; with a positive lower
    bound ``b`` an infinite log-moment breaks the series, and a failing
    borderline condition breaks the o(t^-gamma) rate itself.
    """
    lam = report.lam
    per_p = []
    for p in p_values:
        q = conjugate(p)
        mom = report.p_moments[p]
        finite = math.isfinite(mom)
        per_p.append(
            {
                "p": p,
                "q": q,
                "p_moment": mom,
                "lp_rate_exponent": lam / q,
                "as_rate_exponent": lam / q,
                "as_rate_holds": finite,
                "as_rate_fails_expected": (not finite) and math.isfinite(report.B),
                "A_functional_converges": finite,
            }
        )
    per_gamma = []
    for g in gamma_values:
        mom = report.log_moments[g]
        finite = math.isfinite(mom)
        per_gamma.append(
            {
                "gamma": g,
                "log_moment": mom,
                "poly_rate_holds": finite,
                "series_converges": finite,
                "series_fails_expected": (not finite) and report.b > 0.0,
                "o_rate_fails_expected": (not finite)
                and report.b > 0.0
                and report.inf_log.get(g, {}).get("verdict") == "fails",
            }
        )
    return Predictions(
        nondegenerate=math.isfinite(report.llogl), per_p=per_p, per_gamma=per_gamma
    )


def evaluate_criteria(
    model: Model,
    eig: Eigentriple,
    p_values=(),
    gamma_values=(),
    f_set=None,
    t0: float = 10.0,
    t1: float = 10.0,
) -> CriteriaReport:
    """Evaluate every requested criterion and attach theorem predictions."""
    f_set = list(range(model.d)) if f_set is None else f_set
    inf_log = {g: inf_log_condition(model, eig, g) for g in gamma_values}
    report = CriteriaReport(
        llogl=llogl(model, eig),
        p_moments={p: p_moment(model, eig, p) for p in p_values},
        log_moments={g: log_moment(model, eig, g) for g in gamma_values},
        B=uniform_tail_B(model, eig, t0),
        b=lower_bound_b(model, eig, f_set, t1),
        inf_log=inf_log,
        lam=eig.lam,
    )
    report.predictions = theorem_predictions(report, p_values, gamma_values)
    return report


def gw_predictions(gw: GWModel, p_values=(), gamma_values=()) -> Predictions:
    """Discrete-time analogue of `theorem_predictions` for Galton-Watson.

    The role of ``lambda`` is played by ``log m``; the p-moment condition is
    ``E[Z^p] < infty`` and the log-moment condition ``E[Z (log Z)^(1+g)]``.
    """
    lam = math.log(gw.mean())
    per_p = []
    for p in p_values:
        q = conjugate(p)
        mom = gw.moment(p)
        finite = math.isfinite(mom)
        per_p.append(
            {
                "p": p,
                "q": q,
                "p_moment": mom,
                "lp_rate_exponent": lam / q,
                "as_rate_exponent": lam / q,
                "as_rate_holds": finite,
                "as_rate_fails_expected": not finite,
                "A_functional_converges": finite,
            }
        )
    per_gamma = []
    for g in gamma_values:
        if gw.pmf is not None:
            mom = sum(
                k * math.log(k) ** (1.0 + g) * w for k, w in enumerate(gw.pmf) if k > 1
            )
        else:
            mom = _gw_powerlaw_log_moment(gw.alpha, g)
        finite = math.isfinite(mom)
        per_gamma.append(
            {
                "gamma": g,
                "log_moment": mom,
                "poly_rate_holds": finite,
                "series_converges": finite,
            }
        )
    return Predictions(nondegenerate=math.isfinite(gw.zlogz()), per_p=per_p, per_gamma=per_gamma)


def _gw_powerlaw_log_moment(alpha: float, g: float, terms: int = 200000) -> float:
    # sum k^-alpha (log k)^(1+g); converges for alpha > 1, computed by
    # partial sum plus an integral tail estimate.
    from scipy.special import zeta

    k = np.arange(2, terms, dtype=float)
    s = float(np.sum(k ** (-alpha) * np.log(k) ** (1.0 + g)))
    tail = terms ** (1.0 - alpha) / (alpha - 1.0) * math.log(terms) ** (1.0 + g)
    return (s + tail) / float(zeta(1.0 + alpha))
