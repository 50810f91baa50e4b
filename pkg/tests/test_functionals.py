import math

import numpy as np
import pytest

import supermart as sm
from supermart.functionals import (
    a_functional,
    a_tilde_functional,
    c_functionals,
    lemma_A_residual,
    lemma_C_residual,
    window_average,
)
from supermart.sim import PathRecord


def synthetic_path(times, m_values, lam=1.0, jumps=None, masses=None, phi=None):
    times = np.asarray(times, dtype=float)
    m = np.asarray(m_values, dtype=float)
    phi = np.array([1.0]) if phi is None else np.asarray(phi, dtype=float)
    if masses is None:
        masses = (np.exp(lam * times)[:, None] * m[:, None]) / phi[0]
    return PathRecord(
        times=times,
        masses=masses,
        M=m,
        jumps=np.asarray(jumps, dtype=float) if jumps is not None else np.empty((0, 3)),
        lam=lam,
        phi=phi,
    )


class TestAFunctional:
    def test_constant_path_is_zero(self):
        t = np.linspace(0, 3, 301)
        pr = synthetic_path(t, np.ones_like(t))
        curve = a_functional(pr, 1.0, 2.0)
        assert np.allclose(curve.values, 0.0)

    def test_exponential_relaxation_closed_form(self):
        # M_s = 1 - e^{-s}, Minf = 1, a* = 2, lam = 1:
        # A_t = int_0^t e^{s/2} e^{-s} ds = 2 (1 - e^{-t/2})
        dt = 1e-3
        t = np.arange(0, 1.0 + dt / 2, dt)
        pr = synthetic_path(t, 1.0 - np.exp(-t))
        curve = a_functional(pr, 1.0, 2.0)
        assert curve.final() == pytest.approx(2.0 * (1.0 - math.exp(-0.5)), abs=1e-4)
        assert curve.final() == pytest.approx(0.7869386805747332, abs=1e-4)

    def test_nondecreasing_when_below_limit(self):
        t = np.linspace(0, 4, 400)
        pr = synthetic_path(t, 1.0 - np.exp(-0.3 * t))
        curve = a_functional(pr, 1.0, 3.0)
        assert np.all(np.diff(curve.values) >= -1e-15)

    def test_starts_at_zero(self):
        t = np.linspace(0, 2, 50)
        pr = synthetic_path(t, np.cos(t))
        assert a_functional(pr, 0.5, 4.0).values[0] == 0.0


class TestATildeFunctional:
    def test_constant_path_is_zero(self):
        t = np.linspace(0, 3, 100)
        pr = synthetic_path(t, np.full_like(t, 0.7))
        assert np.allclose(a_tilde_functional(pr, 2.0).values, 0.0)

    def test_single_logged_jump_weighted_exactly(self):
        # jump dM = -0.2 at s = 2 with lam = 1, p = 2 (q = 2):
        # contribution e^{2/2} * (-0.2) = -0.2 e
        t = np.linspace(0, 4, 5)  # coarse grid: the jump sits inside a step
        m = np.array([1.0, 1.0, 1.0, 0.8, 0.8])
        size = 0.2 / math.exp(-1.0 * 2.0)  # e^{-lam tau} * r = 0.2
        pr = synthetic_path(t, m, jumps=[[2.0, 0, -size]])
        curve = a_tilde_functional(pr, 2.0)
        assert curve.final() == pytest.approx(-0.2 * math.e, rel=1e-12)
        assert curve.final() == pytest.approx(-0.5436563656918091, rel=1e-12)

    def test_left_point_weighting_without_jump_log(self):
        t = np.array([0.0, 1.0, 2.0])
        m = np.array([1.0, 1.5, 1.2])
        pr = synthetic_path(t, m)
        q = 2.0
        expected = math.exp(0.0) * 0.5 + math.exp(1.0 / q) * (-0.3)
        assert a_tilde_functional(pr, 2.0).final() == pytest.approx(expected, rel=1e-12)


class TestCFunctionals:
    def test_constant_path_zero(self):
        t = np.linspace(0, 2, 80)
        pr = synthetic_path(t, np.ones_like(t))
        c, ct = c_functionals(pr, 1.0, 1.0)
        assert np.allclose(c.values, 0.0)
        assert np.allclose(ct.values, 0.0)

    def test_exponential_relaxation_closed_form(self):
        # M_s = 1 - e^{-s}, gamma = 1: C_t = int_0^t e^{-s} ds = 1 - e^{-t}
        dt = 1e-3
        t = np.arange(0, 2.0 + dt / 2, dt)
        pr = synthetic_path(t, 1.0 - np.exp(-t))
        c, _ = c_functionals(pr, 1.0, 1.0)
        assert c.final() == pytest.approx(1.0 - math.exp(-2.0), abs=1e-6)
        assert c.final() == pytest.approx(0.8646647167633873, abs=1e-6)

    def test_identity_residual_small_on_smooth_path(self):
        dt = 1e-3
        t = np.arange(0, 2.0 + dt / 2, dt)
        pr = synthetic_path(t, 1.0 - np.exp(-t))
        res = lemma_C_residual(pr, 1.0, 1.0)
        # |gamma C_T - Ctilde_T - T^gamma (Minf - M_T)| = O(dt) on smooth paths
        assert res < 5 * dt

    def test_gamma_below_one_first_cell(self):
        dt = 1e-3
        t = np.arange(0, 1.0 + dt / 2, dt)
        pr = synthetic_path(t, 1.0 - np.exp(-t))
        c, _ = c_functionals(pr, 1.0, 0.5)
        # oracle: int_0^1 s^{-1/2} e^{-s} ds (lower incomplete gamma)
        from scipy.special import gamma as gfun, gammainc

        oracle = gfun(0.5) * gammainc(0.5, 1.0)
        assert c.final() == pytest.approx(oracle, abs=2e-3)


class TestLemmaIdentities:
    def test_a_identity_residual_nearly_invariant_in_minf_constant(self):
        # analytically the residual does not depend on the constant used for
        # Minf; discretized, the dependence is the trapezoid error of the
        # weight integral times the constant shift, O(dt^2)
        rng = np.random.default_rng(5)
        t = np.linspace(0, 3, 500)
        m = 1.0 + np.cumsum(rng.normal(0, 0.01, len(t)))
        pr = synthetic_path(t, m)
        r1 = lemma_A_residual(pr, 1.0, 2.0)
        r2 = lemma_A_residual(pr, 17.3, 2.0)
        assert abs(r1 - r2) <= 5e-4

    def test_c_identity_residual_nearly_invariant_in_minf_constant(self):
        rng = np.random.default_rng(6)
        t = np.linspace(0, 3, 500)
        m = 1.0 + np.cumsum(rng.normal(0, 0.01, len(t)))
        pr = synthetic_path(t, m)
        r1 = lemma_C_residual(pr, 1.0, 1.0)
        r2 = lemma_C_residual(pr, -4.2, 1.0)
        assert abs(r1 - r2) <= 5e-4

    def test_a_identity_residual_shrinks_linearly(self):
        # deterministic smooth path: residual ratio ~ 4 per dt halving
        # (O(dt^2) quadrature); simulated paths give ~2 (checked in the
        # acceptance suite); here assert >= 1.8 per the dt protocol
        residuals = []
        for dt in (4e-3, 2e-3, 1e-3):
            t = np.arange(0, 2.0 + dt / 2, dt)
            pr = synthetic_path(t, 1.0 - np.exp(-t) + 0.3 * np.sin(t))
            residuals.append(lemma_A_residual(pr, 1.0, 2.0))
        assert residuals[0] / residuals[1] >= 1.8
        assert residuals[1] / residuals[2] >= 1.8


class TestLinearity:
    def test_functionals_linear_in_m_increments(self):
        rng = np.random.default_rng(9)
        t = np.linspace(0, 2, 200)
        m1 = 1.0 + np.cumsum(rng.normal(0, 0.02, len(t)))
        m2 = 1.0 + np.cumsum(rng.normal(0, 0.02, len(t)))
        a, b = 0.7, -0.4
        combo = a * m1 + b * m2
        for func in (
            lambda pr: a_functional(pr, 0.0, 2.0).values,
            lambda pr: a_tilde_functional(pr, 1.5).values,
            lambda pr: c_functionals(pr, 0.0, 1.0)[0].values,
            lambda pr: c_functionals(pr, 0.0, 1.0)[1].values,
        ):
            v1 = func(synthetic_path(t, m1))
            v2 = func(synthetic_path(t, m2))
            vc = func(synthetic_path(t, combo))
            # with Minf = 0 every functional is linear in the path
            assert np.allclose(vc, a * v1 + b * v2, atol=1e-10)


class TestWindowAverage:
    def test_all_types_equals_trapezoid_of_m(self):
        t = np.linspace(0, 4, 401)
        rng = np.random.default_rng(3)
        m = 1.0 + np.cumsum(rng.normal(0, 0.01, len(t)))
        pr = synthetic_path(t, m)
        got = window_average(pr, 1, [0])
        sel = (t >= 1.0) & (t <= 2.0)
        assert got == pytest.approx(float(np.trapezoid(m[sel], t[sel])), rel=1e-12)

    def test_empty_f_is_zero(self):
        t = np.linspace(0, 3, 31)
        phi = np.array([1.0, 1.0])
        masses = np.ones((len(t), 2))
        pr = PathRecord(
            times=t, masses=masses, M=np.ones(len(t)), jumps=np.empty((0, 3)),
            lam=0.5, phi=phi,
        )
        assert window_average(pr, 1, []) == 0.0

    def test_deterministic_model_gives_m0(self):
        # M constant: window average over any [n, n+1] equals M_0
        t = np.linspace(0, 5, 501)
        pr = synthetic_path(t, np.full_like(t, 1.0))
        assert window_average(pr, 2, [0]) == pytest.approx(1.0, rel=1e-12)

    def test_window_past_horizon_raises(self):
        t = np.linspace(0, 2, 21)
        pr = synthetic_path(t, np.ones_like(t))
        with pytest.raises(ValueError):
            window_average(pr, 2, [0])
