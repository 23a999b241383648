import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nslab.errors import DomainError, GridMismatchError, SymmetryError
from nslab.initial_data import random_divfree, taylor_green
from nslab.spectral import (
    Grid,
    SpectralField,
    Trajectory,
    divergence_residual,
    heat_propagate,
    l2_norm,
    leray_project,
    lp_norm,
    nonlinear_div,
    rescale,
    sup_norm,
    support_threshold,
    symmetrize,
    to_physical,
    to_spectral,
    translate,
)


def random_field(grid, seed=0, m=None):
    rng = np.random.default_rng(seed)
    m = grid.d if m is None else m
    return to_spectral(rng.standard_normal((m,) + grid.shape), grid)


def band_limited(grid, kmax, seed=0):
    f = random_field(grid, seed)
    keep = np.all(np.abs(grid.k) <= kmax, axis=0)
    return f.like(f.coeffs * keep)


def convolution_oracle(u, v):
    """Dense O(M^2) evaluation of P div(u (x) v) over all pairs of nonzero modes."""
    g = u.grid
    N, d = g.N, g.d
    out = np.zeros_like(u.coeffs)
    ku = [tuple(k) for k in np.argwhere(np.any(np.abs(u.coeffs) > 0, axis=0))]
    kv = [tuple(k) for k in np.argwhere(np.any(np.abs(v.coeffs) > 0, axis=0))]
    kmax = int(math.floor(g.dealias * N / 2))
    signed = lambda i: i if i < N // 2 else i - N
    for a in ku:
        for b in kv:
            s = tuple((signed(i) + signed(j)) for i, j in zip(a, b))
            if any(abs(x) > kmax for x in s):
                continue
            idx = tuple(x % N for x in s)
            xi = np.array(s, float) / g.box_scale
            prod = np.outer(u.coeffs[(slice(None),) + a], v.coeffs[(slice(None),) + b])  # [j, i] = u_j v_i
            out[(slice(None),) + idx] += 1j * xi @ prod
    # explicit per-mode projector
    for idx in np.ndindex(*g.shape):
        xi = np.array([signed(i) for i in idx], float) / g.box_scale
        n2 = xi @ xi
        if n2 > 0:
            P = np.eye(d) - np.outer(xi, xi) / n2
            out[(slice(None),) + idx] = P @ out[(slice(None),) + idx]
    return out


class TestGrid:
    def test_rejects_bad_sizes(self):
        for N in (6, 12, 4):
            with pytest.raises(DomainError):
                Grid(2, N)
        with pytest.raises(DomainError):
            Grid(4, 16)
        with pytest.raises(DomainError):
            Grid(2, 16, box_scale=0.0)

    def test_dealias_mask_cutoff(self):
        g = Grid(2, 32)
        kmax = int(math.floor(2 / 3 * 16))
        assert g.kmax_dealiased == kmax
        assert np.array_equal(g.dealias_mask, np.all(np.abs(g.k) <= kmax, axis=0))

    def test_frequency_lattice(self):
        g = Grid(3, 16, box_scale=2.0)
        assert np.allclose(g.xi, g.k / 2.0)
        assert g.side == pytest.approx(4 * math.pi)


class TestTransforms:
    def test_constant_field(self):
        g = Grid(2, 16)
        f = to_spectral(np.full((2,) + g.shape, 3.5), g)
        nz = np.argwhere(np.abs(f.coeffs) > 1e-15)
        assert {tuple(x[1:]) for x in nz} == {(0, 0)}
        assert np.allclose(f.coeffs[:, 0, 0], 3.5)

    def test_single_mode(self):
        g = Grid(2, 16)
        u = np.zeros((2,) + g.shape)
        u[1] = np.sin(g.x[0])
        f = to_spectral(u, g)
        nz = {tuple(x) for x in np.argwhere(np.abs(f.coeffs) > 1e-14)}
        assert nz == {(1, 1, 0), (1, 15, 0)}
        assert f.coeffs[1, 1, 0] == pytest.approx(-0.5j)

    @pytest.mark.parametrize("d,N", [(2, 64), (3, 16)])
    def test_round_trip(self, d, N):
        g = Grid(d, N)
        u = np.random.default_rng(1).standard_normal((d,) + g.shape)
        back = to_physical(to_spectral(u, g))
        assert np.linalg.norm(back - u) / np.linalg.norm(u) <= 1e-12

    def test_non_hermitian_rejected(self):
        g = Grid(2, 16)
        c = np.zeros((2,) + g.shape, complex)
        c[0, 1, 0] = 1.0
        with pytest.raises(SymmetryError):
            to_physical(SpectralField(g, c))
        assert np.iscomplexobj(to_physical(SpectralField(g, c, real=False)))

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            SpectralField(Grid(2, 16), np.zeros((2, 8, 8)))
        a, b = random_field(Grid(2, 16)), random_field(Grid(2, 32))
        with pytest.raises(GridMismatchError):
            a + b


class TestLeray:
    def test_gradient_annihilated(self):
        g = Grid(2, 32)
        phi = np.sin(g.x[0]) * np.cos(2 * g.x[1]) + np.cos(3 * g.x[0])
        grad = np.stack([np.cos(g.x[0]) * np.cos(2 * g.x[1]) - 3 * np.sin(3 * g.x[0]),
                         -2 * np.sin(g.x[0]) * np.sin(2 * g.x[1])])
        assert l2_norm(leray_project(to_spectral(grad, g))) <= 1e-13 * max(1.0, np.abs(phi).max())

    def test_divergence_free_unchanged(self):
        u = taylor_green(Grid(2, 32))
        assert np.max(np.abs(leray_project(u).coeffs - u.coeffs)) <= 1e-14

    def test_per_mode_matrix_oracle(self):
        g = Grid(2, 16)
        f = to_spectral(np.stack([np.sin(g.x[1]), np.sin(g.x[0])]), g)
        out = leray_project(f).coeffs
        ref = np.empty_like(f.coeffs)
        for idx in np.ndindex(*g.shape):
            xi = g.xi[(slice(None),) + idx]
            n2 = xi @ xi
            P = np.eye(2) if n2 == 0 else np.eye(2) - np.outer(xi, xi) / n2
            ref[(slice(None),) + idx] = P @ f.coeffs[(slice(None),) + idx]
        assert np.max(np.abs(out - ref)) <= 1e-14

    def test_zero_mode_kept(self):
        g = Grid(3, 16)
        f = random_field(g, 3)
        assert np.array_equal(leray_project(f).coeffs[:, 0, 0, 0], f.coeffs[:, 0, 0, 0])

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31), d=st.sampled_from([2, 3]))
    def test_idempotent_and_divergence_free(self, seed, d):
        g = Grid(d, 16)
        f = random_field(g, seed)
        P = leray_project(f)
        assert l2_norm(leray_project(P) - P) <= 1e-13 * l2_norm(f)
        assert divergence_residual(P) <= 1e-12 * l2_norm(f)


class TestHeat:
    def test_identity_at_zero(self):
        f = random_field(Grid(2, 16))
        assert np.array_equal(heat_propagate(f, 0.0).coeffs, f.coeffs)

    def test_unit_mode_halved(self):
        g = Grid(2, 16)
        f = to_spectral(np.stack([np.zeros(g.shape), np.sin(g.x[0])]), g)
        h = heat_propagate(f, math.log(2))
        assert sup_norm(h) == pytest.approx(0.5, rel=1e-14)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            heat_propagate(random_field(Grid(2, 16)), -1e-3)

    def test_per_mode_l2_oracle(self):
        g = Grid(3, 16)
        f = random_field(g, 5)
        t = 0.037
        ref = math.sqrt(sum(abs(c) ** 2 * math.exp(-2 * t * float(g.xi_sq[idx]))
                            for comp in f.coeffs for idx, c in np.ndenumerate(comp)) * g.volume)
        assert l2_norm(heat_propagate(f, t)) == pytest.approx(ref, rel=1e-13)

    @settings(max_examples=20, deadline=None)
    @given(s=st.floats(0, 2), t=st.floats(0, 2))
    def test_semigroup(self, s, t):
        f = random_field(Grid(2, 16), 2)
        a = heat_propagate(heat_propagate(f, s), t).coeffs
        b = heat_propagate(f, s + t).coeffs
        assert np.max(np.abs(a - b)) <= 1e-13
        assert np.all(np.abs(b) <= np.abs(f.coeffs) + 1e-16)


class TestNonlinear:
    def test_zero_inputs(self):
        g = Grid(2, 16)
        u = random_field(g)
        assert np.max(np.abs(nonlinear_div(u, SpectralField.zeros(g)).coeffs)) == 0

    def test_taylor_green_is_gradient(self):
        u = taylor_green(Grid(2, 64))
        assert np.max(np.abs(to_physical(nonlinear_div(u, u)))) <= 1e-12

    @pytest.mark.parametrize("d,N,kmax", [(2, 16, 3), (3, 16, 2)])
    def test_convolution_oracle(self, d, N, kmax):
        g = Grid(d, N)
        u = band_limited(g, kmax, 1)
        v = band_limited(g, kmax, 2)
        out = nonlinear_div(u, v).coeffs
        assert np.max(np.abs(out - convolution_oracle(u, v))) <= 1e-12

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            nonlinear_div(random_field(Grid(2, 16)), random_field(Grid(2, 32)))

    @settings(max_examples=10, deadline=None)
    @given(alpha=st.floats(-10, 10, allow_nan=False), seed=st.integers(0, 1000))
    def test_bilinear(self, alpha, seed):
        g = Grid(2, 16)
        u, v = random_field(g, seed), random_field(g, seed + 1)
        a = nonlinear_div(u * alpha, v).coeffs
        b = alpha * nonlinear_div(u, v).coeffs
        assert np.max(np.abs(a - b)) <= 1e-13 * max(1.0, abs(alpha)) * np.max(np.abs(b) / max(abs(alpha), 1e-300) + 1)


class TestNorms:
    def test_zero(self):
        f = SpectralField.zeros(Grid(2, 16))
        for p in (1, 2, 3.5, math.inf):
            assert lp_norm(f, p) == 0

    def test_constant_l2(self):
        g = Grid(2, 32)
        c = 1.7
        f = to_spectral(np.stack([np.full(g.shape, c), np.zeros(g.shape)]), g)
        assert lp_norm(f, 2) == pytest.approx(c * 2 * math.pi, rel=1e-14)
        assert lp_norm(f, 3) == pytest.approx(c * (4 * math.pi**2) ** (1 / 3), rel=1e-13)

    def test_sup_of_sine(self):
        g = Grid(2, 64)
        f = to_spectral(np.stack([np.sin(g.x[0]), np.zeros(g.shape)]), g)
        assert 0.999 <= sup_norm(f, refine=True) <= 1.0 + 1e-14

    def test_p_below_one(self):
        with pytest.raises(DomainError):
            lp_norm(random_field(Grid(2, 16)), 0.5)


class TestSymmetries:
    def test_translate_by_lattice_shift(self):
        g = Grid(2, 32)
        f = random_field(g, 4)
        out = to_physical(translate(f, [3 * g.spacing, 0.0]))
        assert np.allclose(out, np.roll(to_physical(f), 3, axis=1), atol=1e-13)

    def test_rescale_preserves_critical_norms(self):
        g = Grid(3, 16)
        f = random_divfree(g, seed=1)
        for lam in (2.0, 4.0):
            r = rescale(f, lam)
            assert r.grid.box_scale == pytest.approx(1 / lam)
            assert sup_norm(r) == pytest.approx(lam * sup_norm(f), rel=1e-14)
            assert lp_norm(r, 3) == pytest.approx(lp_norm(f, 3), rel=1e-12)


class TestSupport:
    def test_threshold_of_single_modes(self):
        g = Grid(2, 16, box_scale=0.5)
        c = np.zeros((2,) + g.shape, complex)
        c[0, 3, 1] = 1.0
        c[0, 5, 2] = 1.0
        assert support_threshold(c, g) == pytest.approx(6.0)
        assert support_threshold(np.zeros_like(c), g) == math.inf


class TestTrajectory:
    def test_time_ordering(self):
        f = random_field(Grid(2, 16))
        tr = Trajectory()
        with pytest.raises(Exception):
            tr.append(0.5, f)
        tr.append(0.0, f)
        with pytest.raises(Exception):
            tr.append(0.0, f)

    def test_heat_interpolation_exact_for_heat_flow(self):
        g = Grid(2, 16)
        f = random_field(g, 9)
        tr = Trajectory(interp="heat")
        tr.append(0.0, f)
        tr.append(0.2, heat_propagate(f, 0.2))
        mid = tr.at(0.07)
        assert np.max(np.abs(mid.coeffs - heat_propagate(f, 0.07).coeffs)) <= 1e-14

    def test_symmetrize_is_projection(self):
        g = Grid(3, 8)
        rng = np.random.default_rng(0)
        f = SpectralField(g, rng.standard_normal((3,) + g.shape) + 1j * rng.standard_normal((3,) + g.shape))
        s = symmetrize(f)
        assert np.allclose(symmetrize(s).coeffs, s.coeffs)
        assert np.max(np.abs(np.imag(to_physical(s, check=False)))) <= 1e-13
