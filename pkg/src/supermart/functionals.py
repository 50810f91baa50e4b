"""Pathwise functionals of the martingale and their exact identities.

Everything here is a deterministic transform of one recorded path: weighted
time integrals of ``Minf - M_s`` (trapezoid on the recorded grid) and
weighted Stieltjes integrals against ``dM_s`` (left-point sums, with logged
jumps placed exactly at their times).  Two identities tie them together and
serve as discretization diagnostics:

* ``A_T(q) = (q/lam) Atilde_T(p) + (q/lam) e^{lam T / q}(Minf - M_T)
  - (q/lam)(Minf - M_0)``  with 1/p + 1/q = 1;
* ``gamma C_T(gamma) = Ctilde_T(gamma) + T^gamma (Minf - M_T)``.

Both residuals are invariant in the constant used for ``Minf`` (the
derivative of each side in the constant cancels), so they measure pure
discretization error and must shrink linearly in the step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FunctionalCurve",
    "a_functional",
    "a_tilde_functional",
    "c_functionals",
    "window_average",
    "lemma_A_residual",
    "lemma_C_residual",
]


@dataclass(frozen=True)
class FunctionalCurve:
    grid: np.ndarray
    values: np.ndarray
    kind: str

    def final(self) -> float:
        return float(self.values[-1])


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros(len(t))
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def a_functional(path, minf: float, a_star: float) -> FunctionalCurve:
    """``A_t(a*) = int_0^t e^{lam s / a*} (Minf - M_s) ds`` by trapezoid."""
    if a_star <= 1.0:
        raise ValueError("a_star must exceed 1")
    t = np.asarray(path.times)
    integrand = np.exp(path.lam * t / a_star) * (minf - np.asarray(path.M))
    return FunctionalCurve(grid=t, values=_cumtrapz(integrand, t), kind=f"A({a_star:g})")


def _stieltjes_with_jumps(path, weight) -> np.ndarray:
    """Left-point sum of ``weight(s) dM_s`` with logged jumps placed exactly.

    Each recorded increment is split into its logged-jump part (weighted at
    the true jump times) and the remainder (weighted at the left endpoint).
    """
    t = np.asarray(path.times)
    m = np.asarray(path.M)
    dm = np.diff(m)
    w_left = weight(t[:-1])
    contrib = w_left * dm
    jumps = np.asarray(path.jumps)
    if jumps.size:
        # a jump in [t_k, t_{k+1}) lands in the increment M_{k+1} - M_k
        tau = jumps[:, 0]
        dm_jump = np.exp(-path.lam * tau) * path.phi[jumps[:, 1].astype(int)] * jumps[:, 2]
        idx = np.clip(np.searchsorted(t, tau, side="right") - 1, 0, len(t) - 2)
        np.subtract.at(contrib, idx, w_left[idx] * dm_jump)
        np.add.at(contrib, idx, weight(tau) * dm_jump)
    out = np.zeros(len(t))
    out[1:] = np.cumsum(contrib)
    return out


def a_tilde_functional(path, p: float) -> FunctionalCurve:
    """``Atilde_t(p) = int_0^t e^{lam s / q} dM_s`` with ``1/p + 1/q = 1``."""
    if not (1.0 < p <= 2.0):
        raise ValueError("p must lie in (1, 2]")
    q = p / (p - 1.0)
    vals = _stieltjes_with_jumps(path, lambda s: np.exp(path.lam * s / q))
    return FunctionalCurve(grid=np.asarray(path.times), values=vals, kind=f"Atilde({p:g})")


def c_functionals(path, minf: float, gamma: float):
    """``C_t(gamma)`` and ``Ctilde_t(gamma)`` on the path grid.

    ``C_t = int_0^t s^{gamma-1}(Minf - M_s) ds`` (for gamma < 1 the first
    cell is integrated with the exact power weight, the integrand being
    otherwise singular at 0); ``Ctilde_t = int_0^t s^gamma dM_s``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    t = np.asarray(path.times)
    m = np.asarray(path.M)
    resid = minf - m
    if gamma >= 1.0:
        integrand = np.where(t > 0, t ** (gamma - 1.0), 0.0 if gamma > 1.0 else 1.0)
        c_vals = _cumtrapz(integrand * resid, t)
    else:
        c_vals = np.zeros(len(t))
        if len(t) > 1:
            c_vals[1] = resid[0] * t[1] ** gamma / gamma
            inner = 0.5 * (t[1:-1] ** (gamma - 1.0) * resid[1:-1] + t[2:] ** (gamma - 1.0) * resid[2:])
            c_vals[2:] = c_vals[1] + np.cumsum(inner * np.diff(t[1:]))
    ct_vals = _stieltjes_with_jumps(path, lambda s: s**gamma)
    return (
        FunctionalCurve(grid=t, values=c_vals, kind=f"C({gamma:g})"),
        FunctionalCurve(grid=t, values=ct_vals, kind=f"Ctilde({gamma:g})"),
    )


def window_average(path, n: int, f_idx) -> float:
    """``int_n^{n+1} e^{-lam s} <phi 1_F, X_s> ds`` by trapezoid.

    Needs recorded masses and a grid covering ``[n, n+1]``.
    """
    if path.masses is None:
        raise ValueError("window_average needs recorded masses")
    t = np.asarray(path.times)
    if n + 1 > t[-1] + 1e-12:
        raise ValueError("window extends past the recorded horizon")
    f_idx = sorted(set(int(i) for i in f_idx))
    proj = np.zeros(len(path.phi))
    proj[f_idx] = path.phi[f_idx]
    vals = np.exp(-path.lam * t) * (np.asarray(path.masses) @ proj)
    lo, hi = float(n), float(n + 1)
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    ts, vs = t[sel], vals[sel]
    # linear end corrections when the grid does not land on the window edges
    if len(ts) == 0 or ts[0] > lo + 1e-12:
        ts, vs = _prepend_interp(t, vals, lo, ts, vs)
    if ts[-1] < hi - 1e-12:
        ts, vs = _append_interp(t, vals, hi, ts, vs)
    return float(np.trapezoid(vs, ts))


def _prepend_interp(t, vals, edge, ts, vs):
    v = float(np.interp(edge, t, vals))
    return np.concatenate([[edge], ts]), np.concatenate([[v], vs])


def _append_interp(t, vals, edge, ts, vs):
    v = float(np.interp(edge, t, vals))
    return np.concatenate([ts, [edge]]), np.concatenate([vs, [v]])


def lemma_A_residual(path, minf: float, p: float) -> float:
    """Residual of the A / Atilde identity at the final recorded time."""
    q = p / (p - 1.0)
    t_end = float(path.times[-1])
    a_val = a_functional(path, minf, q).final()
    at_val = a_tilde_functional(path, p).final()
    m_end = float(path.M[-1])
    m0 = float(path.M[0])
    lam = path.lam
    return abs(
        a_val
        - (q / lam) * at_val
        - (q / lam) * math.exp(lam * t_end / q) * (minf - m_end)
        + (q / lam) * (minf - m0)
    )


def lemma_C_residual(path, minf: float, gamma: float) -> float:
    """Residual of the C / Ctilde identity at the final recorded time."""
    c_curve, ct_curve = c_functionals(path, minf, gamma)
    t_end = float(path.times[-1])
    m_end = float(path.M[-1])
    return abs(gamma * c_curve.final() - ct_curve.final() - t_end**gamma * (minf - m_end))
