import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nslab.blowup import (
    diagnose,
    locate_concentration,
    low_frequency_dominance,
    omega_trace,
    rate_functional,
    select_concentration_times,
    self_similar_family,
    sigma_p,
    typeI_functional,
    verify_concentration_times,
)
from nslab.errors import DomainError, ResolutionError
from nslab.initial_data import taylor_green
from nslab.mild import SolverConfig, solve_local
from nslab.spectral import Grid, SpectralField, Trajectory, sup_norm, to_spectral, translate


def gaussian_field(grid, height, width, center):
    """First component ``height * exp(-|x - center|^2 / (2 width^2))`` (minimal image)."""
    c = np.asarray(center, float).reshape((grid.d,) + (1,) * grid.d)
    dx = (grid.x - c + grid.side / 2) % grid.side - grid.side / 2
    u = np.zeros((grid.d,) + grid.shape)
    u[0] = height * np.exp(-np.sum(dx**2, axis=0) / (2 * width**2))
    return to_spectral(u, grid)


def gaussian_lp(height, width, p, d):
    """``L^p(R^d)`` norm of ``height * exp(-|x|^2 / (2 width^2))``."""
    return height * width ** (d / p) * (2 * math.pi / p) ** (d / (2 * p))


class TestFunctionals:
    def test_sigma(self):
        assert sigma_p(6, 3) == pytest.approx(4.0)
        assert sigma_p(4, 2) == pytest.approx(4.0)
        for p in (3.5, 5.0, 100.0):
            assert sigma_p(p, 3) > 2
        with pytest.raises(DomainError):
            sigma_p(3, 3)
        with pytest.raises(DomainError):
            sigma_p(2, 3)

    def test_zero_trajectory(self):
        g = Grid(3, 16)
        tr = Trajectory.constant(SpectralField.zeros(g), 1.0)
        for trace in (omega_trace(tr), rate_functional(tr, 2.0), typeI_functional(tr, 2.0, 6)):
            assert np.all(trace.value == 0)
            assert trace.relative_spread() == 0

    def test_T_before_last_time(self):
        g = Grid(2, 16)
        tr = Trajectory.constant(SpectralField.zeros(g), 1.0)
        with pytest.raises(DomainError):
            rate_functional(tr, 0.5)

    def test_taylor_green_rate_decays(self):
        g = Grid(2, 32)
        tr = solve_local(taylor_green(g), SolverConfig(T_horizon=2.0)).trajectory
        rate = rate_functional(tr, 3.0)
        assert np.all(np.diff(rate.value) < 0)
        assert rate.value[-1] < 0.05 * rate.value[0]

    def test_self_similar_family(self):
        g = Grid(3, 32)
        tr = self_similar_family(g, 1.0, np.linspace(0, 0.5, 6), width=0.7)
        assert rate_functional(tr, 1.0).relative_spread() <= 1e-3
        assert typeI_functional(tr, 1.0, 6).relative_spread() <= 1e-2

    def test_scaling_covariance(self):
        lam = 2.0
        g = Grid(2, 64, 1.0)
        gl = Grid(2, 64, 1.0 / lam)
        u = gaussian_field(g, 1.0, 0.6, [1.0, 2.0])
        ul = SpectralField(gl, lam * u.coeffs)
        assert sup_norm(ul) == pytest.approx(lam * sup_norm(u), rel=1e-12)
        T = 1.0
        a = typeI_functional(Trajectory.constant(u, 0.5), T, 6).value
        b = typeI_functional(Trajectory.constant(ul, 0.5 / lam**2), T / lam**2, 6).value
        assert np.allclose(a, b, rtol=1e-6)
        pa = locate_concentration(u, sup_norm(u), 4.0, 8, C_conc=0.02)
        pb = locate_concentration(ul, sup_norm(ul), 4.0, 8, C_conc=0.02)
        assert pb.beta == pytest.approx(lam * pa.beta)
        assert pb.radius == pytest.approx(pa.radius / lam)
        assert pb.bound_ratio == pytest.approx(pa.bound_ratio, rel=1e-6)


class TestConcentrationTimes:
    def test_doubling_trace(self):
        C = math.sqrt(1.28)  # 100 C^2 = 2^7
        t = np.arange(0, 40.0001, 0.25)
        picks = select_concentration_times(t, 2.0**t, C)
        assert np.allclose(np.diff(t[picks]), math.log2(100 * C * C))
        assert verify_concentration_times(2.0**t, picks, C)

    def test_bounded_trace(self):
        t = np.linspace(0, 1, 50)
        assert select_concentration_times(t, 1 + 0.5 * np.sin(10 * t), 1.0) == [0]
        assert select_concentration_times([], [], 1.0) == []

    @settings(max_examples=50, deadline=None)
    @given(steps=st.lists(st.floats(-1.0, 3.0), min_size=2, max_size=200), C=st.floats(0.1, 2.0))
    def test_selection_satisfies_inequalities(self, steps, C):
        omega = np.exp(np.cumsum(steps))
        picks = select_concentration_times(np.arange(omega.size), omega, C)
        assert picks[0] == 0 and all(b > a for a, b in zip(picks, picks[1:]))
        assert verify_concentration_times(omega, picks, C)

    def test_verification_rejects(self):
        om = np.array([1.0, 50.0, 200.0])
        assert not verify_concentration_times(om, [0, 1], 1.0)
        assert not verify_concentration_times(om, [0, 0], 1.0)


class TestDominance:
    def test_band_limited(self):
        g = Grid(2, 32)
        u = taylor_green(g)
        w = sup_norm(u)
        dom, r = low_frequency_dominance(u, w, C_conc=1.0)
        assert dom and r == pytest.approx(1.0, abs=1e-12)

    def test_high_mode_annihilated(self):
        g = Grid(2, 64)
        u = to_spectral(np.stack([np.cos(10 * g.x[1]), np.zeros(g.shape)]), g)
        w = sup_norm(u)
        dom, r = low_frequency_dominance(u, w, C_conc=1.0 / (100 * w))  # beta = 1
        assert not dom and r <= 1e-12

    def test_zero_omega(self):
        with pytest.raises(DomainError):
            low_frequency_dominance(SpectralField.zeros(Grid(2, 16)), 0.0, 1.0)


class TestLocate:
    def setup_method(self):
        self.g = Grid(2, 128)
        self.h, self.w = 2.0, 0.3
        self.x0 = np.array([40, 70]) * self.g.spacing
        self.u = gaussian_field(self.g, self.h, self.w, self.x0)
        self.C = 1.0 / (100 * self.h * self.w)  # beta^-1 = width

    def test_bump(self):
        pt = locate_concentration(self.u, sup_norm(self.u), 4.0, 8, self.C)
        assert np.linalg.norm(pt.x - self.x0) <= self.w
        assert pt.beta == pytest.approx(1 / self.w, rel=1e-6)
        closed = gaussian_lp(self.h, self.w, 4.0, 2)
        assert pt.mass == pytest.approx(closed, rel=1e-3)
        assert 0.5 <= pt.mass / (self.h * self.w ** (2 / 4)) <= 2

    def test_translation(self):
        shift = np.array([17, 101])
        a = shift * self.g.spacing
        pa = locate_concentration(self.u, sup_norm(self.u), 4.0, 8, self.C)
        pb = locate_concentration(translate(self.u, a), sup_norm(self.u), 4.0, 8, self.C)
        assert tuple((np.array(pa.index) + shift) % self.g.N) == pb.index
        assert pb.bound_ratio == pytest.approx(pa.bound_ratio, rel=1e-10)

    def test_sup_mass_under_dominance(self):
        w = sup_norm(self.u)
        dom, _ = low_frequency_dominance(self.u, w, self.C)
        pt = locate_concentration(self.u, w, math.inf, 20, self.C)
        assert dom and pt.mass >= 0.5 * w

    def test_errors(self):
        with pytest.raises(DomainError):
            locate_concentration(self.u, 0.0, 4.0)
        with pytest.raises(ResolutionError):
            locate_concentration(self.u, sup_norm(self.u), 4.0, 0.1, self.C)


class TestDiagnose:
    def test_self_similar_report(self):
        g = Grid(3, 32)
        times = np.concatenate([np.linspace(0, 0.9, 10), [0.99, 0.999]])
        tr = self_similar_family(g, 1.0, times, width=0.7)
        rep = diagnose(tr, 1.0, p=6.0, C_conc=0.1)
        assert rep.selection_verified and len(rep.taus) >= 2
        js = rep.concentration_json()
        assert js["tau"][0] == 0 and "proviso" in js
        for pt in rep.points:
            assert pt.self_similar_scale == pytest.approx(math.sqrt(1 - pt.t))
            assert np.isfinite(pt.potential_scale)
