import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nslab.errors import (
    ConfigError,
    IntervalError,
    NotDivergenceFreeError,
    SupportError,
)
from nslab.initial_data import half_space, half_space_rho, random_divfree, taylor_green
from nslab.mild import (
    SolverConfig,
    bilinear_B,
    check_global_criterion,
    default_time_lattice,
    frequency_support_tracker,
    picard_iterate,
    solve_local,
    solve_perturbed,
    step_length,
)
from nslab.spectral import (
    Grid,
    SpectralField,
    Trajectory,
    l2_norm,
    nonlinear_div,
    sup_norm,
    support_threshold,
    to_spectral,
    translate,
)


def single_mode(grid, k, vec):
    """Complex field ``vec * exp(i k . x / Lambda)`` with one lattice coefficient."""
    c = np.zeros((grid.d,) + grid.shape, complex)
    idx = tuple(ki % grid.N for ki in k)
    for i, v in enumerate(vec):
        c[(i,) + idx] = v
    return SpectralField(grid, c, real=False)


def real_field(grid, arrays):
    return to_spectral(np.stack(arrays), grid)


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.C_solve == 1 and cfg.nodes == 16 and cfg.max_halvings == 6
        assert cfg.omega_cap_factor == 1e6 and cfg.dt_floor == 1e-12

    @pytest.mark.parametrize("kw", [{"C_solve": 0.5}, {"nodes": 3}, {"T_horizon": 0}, {"p": 0.5}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SolverConfig(**kw)

    def test_step_law(self):
        assert step_length(0.0, 1.0) == math.inf
        assert step_length(2.0, 1.0) == pytest.approx(1 / 256)
        assert step_length(1.0, 2.0) == pytest.approx(1 / 1024)


class TestBilinear:
    def setup_method(self):
        self.g = Grid(2, 16)
        x = self.g.x
        self.u = real_field(self.g, [np.zeros(self.g.shape), np.cos(x[0])])
        self.v = real_field(self.g, [np.cos(x[1]), np.zeros(self.g.shape)])

    def test_zero_and_t0(self):
        z = Trajectory.constant(SpectralField.zeros(self.g), 1.0)
        assert np.max(np.abs(bilinear_B(z, z, 0.7).coeffs)) == 0
        U = Trajectory.constant(self.u, 1.0)
        assert np.max(np.abs(bilinear_B(U, U, 0.0).coeffs)) == 0

    @pytest.mark.parametrize("t", [0.05, 0.4, 1.0])
    def test_constant_in_time_oracle(self, t):
        U, V = Trajectory.constant(self.u, 1.0), Trajectory.constant(self.v, 1.0)
        N = nonlinear_div(self.u, self.v).coeffs
        xs = self.g.xi_sq
        factor = np.where(xs > 0, -np.expm1(-t * np.where(xs > 0, xs, 1.0)) / np.where(xs > 0, xs, 1.0), t)
        expect = factor * N
        got = bilinear_B(U, V, t).coeffs
        assert np.max(np.abs(expect)) > 0
        assert np.linalg.norm(got - expect) <= 1e-6 * np.linalg.norm(expect)

    def test_coverage(self):
        U = Trajectory.constant(self.u, 0.5)
        with pytest.raises(IntervalError):
            bilinear_B(U, U, 0.6)

    def test_two_mode_support(self):
        g = Grid(2, 32)
        a, b = 2, 3
        u = single_mode(g, (a, 1), (1.0, -a))
        v = single_mode(g, (b, -1), (1.0, b))
        out = bilinear_B(Trajectory.constant(u, 1.0), Trajectory.constant(v, 1.0), 0.5)
        assert l2_norm(out) > 0
        assert support_threshold(out.coeffs, g) == a + b


class TestPicard:
    def test_zero_data(self):
        g = Grid(2, 16)
        res = picard_iterate(SpectralField.zeros(g), 3, keep_iterates=True)
        assert all(np.max(np.abs(it)) == 0 for it in res.iterates)
        assert all(r.sup_u == 0 and r.sup_diff == 0 for r in res.records)

    def test_first_iterate_is_heat_flow(self):
        g = Grid(2, 16)
        u0 = random_divfree(g, band=(1, 4), seed=1)
        res = picard_iterate(u0, 0, T_horizon=0.5, keep_iterates=True)
        for t, c in zip(res.times, res.iterates[1]):
            assert np.allclose(c, np.exp(-t * g.xi_sq) * u0.coeffs, atol=1e-15)

    def test_small_data_contracts(self):
        g = Grid(2, 32)
        u0 = random_divfree(g, band=(1, 6), seed=3, amplitude=0.2)
        res = picard_iterate(u0, 6, T_horizon=1.0)
        diffs = [r.sup_diff for r in res.records]
        ratios = [diffs[n + 1] / diffs[n] for n in range(2, len(diffs) - 1)]
        assert max(ratios) <= 0.5
        assert all(r.sup_diff >= 0 for r in res.records)

    def test_converges_to_local_solution(self):
        g = Grid(2, 16)
        u0 = random_divfree(g, band=(1, 4), seed=5, amplitude=0.1)
        T = 0.5
        res = picard_iterate(u0, 25, T_horizon=T, times=np.linspace(0, T, 65), nodes=8)
        assert res.records[-1].sup_diff <= 1e-12
        sol = solve_local(u0, SolverConfig(T_horizon=T, dt_max=T / 64))
        gap = max(sup_norm(res.final.at(t) - sol.trajectory.at(t, "heat")) for t in res.times[::8])
        assert gap <= 1e-8

    def test_bad_lattice(self):
        with pytest.raises(IntervalError):
            picard_iterate(SpectralField.zeros(Grid(2, 16)), 1, times=[0.1, 0.5])

    def test_default_lattice(self):
        ts = default_time_lattice(2.0, 3)
        assert np.allclose(ts, [0, 0.25, 0.5, 1.0, 2.0])


class TestSolveLocal:
    def test_taylor_green(self):
        g = Grid(2, 32)
        u0 = taylor_green(g)
        sol = solve_local(u0, SolverConfig(T_horizon=1.0))
        assert sol.trajectory.t_end == pytest.approx(1.0)
        err = l2_norm(sol.trajectory.fields[-1] - u0 * math.exp(-2.0))
        assert err <= 1e-6 * l2_norm(u0) * math.exp(-2.0)
        assert not sol.blowup_declared

    def test_zero(self):
        sol = solve_local(SpectralField.zeros(Grid(3, 16)))
        assert sol.T_est == math.inf
        assert all(np.max(np.abs(f.coeffs)) == 0 for f in sol.trajectory.fields)

    def test_not_divfree(self):
        g = Grid(2, 16)
        grad = real_field(g, [np.cos(g.x[0]), np.zeros(g.shape)])
        with pytest.raises(NotDivergenceFreeError):
            solve_local(grad)

    def test_step_law_monotone(self):
        g = Grid(2, 32)
        u0 = random_divfree(g, band=(1, 6), seed=2, amplitude=2.0)
        rec = solve_local(u0, SolverConfig(T_horizon=0.05)).trajectory.records
        # step i is driven by the sup norm recorded at the end of step i - 1
        drive = np.array([r["omega"] for r in rec[:-2]])
        dt = np.array([r["dt"] for r in rec[1:-1]])
        assert len(dt) >= 3
        assert np.allclose(dt, [step_length(w, 1.0) for w in drive], rtol=1e-14)
        up = np.diff(drive) >= 0
        assert np.all(np.diff(dt)[up] <= 0)

    def test_divergence_free_along_run(self):
        g = Grid(3, 16)
        u0 = random_divfree(g, band=(1, 4), seed=0)
        rec = solve_local(u0, SolverConfig(T_horizon=0.05)).trajectory.records
        assert max(r["div_residual"] for r in rec) <= 1e-12

    @settings(max_examples=4, deadline=None)
    @given(s1=st.integers(0, 31), s2=st.integers(0, 31))
    def test_translation_equivariance(self, s1, s2):
        g = Grid(2, 32)
        u0 = random_divfree(g, band=(1, 6), seed=4)
        a = [s1 * g.spacing, s2 * g.spacing]
        cfg = SolverConfig(T_horizon=0.05)
        ref = solve_local(u0, cfg).trajectory
        sh = solve_local(translate(u0, a), cfg).trajectory
        assert sh.t_end == pytest.approx(ref.t_end, rel=1e-14)
        diff = l2_norm(sh.fields[-1] - translate(ref.fields[-1], a))
        assert diff <= 1e-10 * l2_norm(ref.fields[-1])


class TestSolvePerturbed:
    def test_reduces_to_local(self):
        g = Grid(2, 16)
        v0 = random_divfree(g, band=(1, 4), seed=6)
        cfg = SolverConfig(T_horizon=0.1)
        a = solve_local(v0, cfg).trajectory
        b = solve_perturbed(v0, config=cfg).trajectory
        zero_w = Trajectory.constant(SpectralField.zeros(g), 0.1)
        c = solve_perturbed(v0, zero_w, T=0.1, config=cfg).trajectory
        assert np.allclose(a.times, b.times, rtol=0, atol=0)
        for other in (b, c):
            assert l2_norm(other.fields[-1] - a.fields[-1]) <= 1e-10 * l2_norm(a.fields[-1])

    def test_zero_perturbation_stays_zero(self):
        g = Grid(2, 16)
        w = solve_local(taylor_green(g), SolverConfig(T_horizon=0.2)).trajectory
        v = solve_perturbed(SpectralField.zeros(g), w, T=0.2).trajectory
        assert v.t_end == pytest.approx(0.2)
        assert max(np.max(np.abs(f.coeffs)) for f in v.fields) <= 1e-14

    def test_background_coverage(self):
        g = Grid(2, 16)
        w = Trajectory.constant(SpectralField.zeros(g), 0.1)
        with pytest.raises(IntervalError):
            solve_perturbed(random_divfree(g, band=(1, 4)), w, T=0.2)


class TestSupportTracker:
    def test_first_difference_keeps_threshold(self):
        g = Grid(2, 32)
        rho = half_space_rho(2)
        u0 = half_space(g, 2, c=0.1)
        res = frequency_support_tracker(u0, rho, 0, T_horizon=0.1)
        assert res.records[0].rho == support_threshold(u0.coeffs, g)
        assert res.records[0].rho >= rho

    def test_superposition(self):
        g = Grid(2, 64)
        L = 3
        rho = half_space_rho(L)
        res = frequency_support_tracker(half_space(g, L, c=1.0), rho, 2, T_horizon=0.05)
        for r in res.records:
            assert r.rho >= (r.n + 1) * rho
            assert r.outside_fraction <= 1e-8

    def test_precondition(self):
        g = Grid(2, 16)
        with pytest.raises(SupportError):
            frequency_support_tracker(taylor_green(g), 1.0, 1)


class TestGlobalCriterion:
    def test_small_data_satisfied(self):
        g = Grid(2, 32)
        rho = half_space_rho(2)
        res = check_global_criterion(half_space(g, 2, c=1.0), rho, n0_max=0, C_glob=1.0,
                                     T_probe=0.5, n_extra=3)
        assert res.satisfied and res.best_n0 == 0 and res.margin > 0
        assert res.cauchy_ok
        assert "T_probe" in res.caveat

    def test_zero_data(self):
        g = Grid(2, 16)
        res = check_global_criterion(SpectralField.zeros(g), 2.0, n0_max=1, C_glob=1.0, n_extra=1)
        assert res.satisfied and res.best_n0 == 0
        assert res.margin == 2.0

    def test_large_data_fails(self):
        g = Grid(2, 32)
        rho = half_space_rho(2)
        u0 = half_space(g, 2, c=1.0)
        small = check_global_criterion(u0, rho, n0_max=0, C_glob=1.0, n_extra=0)
        big = check_global_criterion(u0 * 100.0, rho, n0_max=0, C_glob=1.0, n_extra=0)
        assert small.satisfied and not big.satisfied
        assert big.margin < 0
        assert all(np.isfinite(r.rho) for r in big.records)
