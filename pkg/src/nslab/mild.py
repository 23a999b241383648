"""Mild-form Navier-Stokes solvers and the Picard iteration sequence.

Sign convention: ``u(t) = e^{t Delta} u0 - B(u, u)(t)`` with

    B(u, v)(t) = int_0^t e^{(t - s) Delta} P div(u (x) v)(s) ds,

where ``(P div(u (x) v))_i = P sum_j d_j (u_j v_i)``.

The local solver marches intervals whose length follows
``sqrt(dt) = 1 / (8 C^2 ||u||_inf)``.  Inside an interval the mild equation is
solved by exponential collocation: the nonlinear term is represented by its
Lagrange interpolant through ``K`` Gauss-Legendre nodes and the Duhamel
integral of every interpolant basis polynomial against the heat factor is
computed per distinct ``|xi|^2``.  The collocation system is solved by Picard
sweeps, which is the contraction map of the local existence argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import BarycentricInterpolator

from . import spectral as sp
from .errors import ConfigError, IntervalError, NotDivergenceFreeError, NumericalDivergenceError, SupportError
from .spectral import Grid, SpectralField, Trajectory

__all__ = [
    "SolverConfig",
    "SolveResult",
    "IterationRecord",
    "PicardResult",
    "GlobalCriterionResult",
    "bilinear_B",
    "duhamel_forcing",
    "picard_iterate",
    "solve_local",
    "solve_perturbed",
    "frequency_support_tracker",
    "check_global_criterion",
    "step_length",
]


@dataclass
class SolverConfig:
    """Parameters of the local solver.

    Attributes:
        C_solve: constant in the step law ``dt = (8 C^2 omega)^-2``.
        p: exponent of the recorded ``L^p`` norm.
        nodes: Gauss-Legendre collocation nodes per interval.
        max_steps: hard cap on accepted intervals.
        omega_cap_factor: blowup is declared once ``omega > factor * omega(0)``.
        dt_floor: blowup is declared once the step law asks for less than this.
        T_horizon: final time.
        picard_tol: sweep stopping tolerance, relative to ``omega``.
        max_sweeps: Picard sweeps before an interval is accepted as is.
        max_halvings: interval halvings allowed after a failed contraction.
        refine_sup: evaluate ``omega`` on the 2x padded grid.
        dt_max: optional upper bound on the interval length.
    """

    C_solve: float = 1.0
    p: float = 6.0
    nodes: int = 16
    max_steps: int = 100000
    omega_cap_factor: float = 1e6
    dt_floor: float = 1e-12
    T_horizon: float = 1.0
    picard_tol: float = 1e-10
    max_sweeps: int = 25
    max_halvings: int = 6
    refine_sup: bool = True
    dt_max: float | None = None

    def __post_init__(self):
        if not self.C_solve >= 1:
            raise ConfigError("C_solve must be >= 1", "solver.C_solve")
        if int(self.nodes) < 4:
            raise ConfigError("at least 4 collocation nodes are required", "solver.nodes")
        if not self.T_horizon > 0:
            raise ConfigError("T_horizon must be positive", "solver.T_horizon")
        if not self.p >= 1:
            raise ConfigError("p must be >= 1", "solver.p")
        self.nodes = int(self.nodes)

    def to_dict(self) -> dict:
        return asdict(self)


def step_length(omega: float, C: float) -> float:
    """Interval length ``(8 C^2 omega)^-2``; infinite for ``omega = 0``."""
    if omega <= 0:
        return math.inf
    return (8.0 * C * C * omega) ** -2


# --------------------------------------------------------------------------
# collocation weights


@lru_cache(maxsize=8)
def _gl(K: int):
    x, w = np.polynomial.legendre.leggauss(K)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=8)
def _panel_rule(levels: int, per_panel: int = 24):
    """Composite Gauss-Legendre rule on [0, 1] with panels graded towards 0."""
    xg, wg = _gl(per_panel)
    edges = np.concatenate([[0.0], 2.0 ** -np.arange(levels, -1, -1)])
    a, b = edges[:-1], edges[1:]
    s = (a[:, None] + (b - a)[:, None] * xg[None]).ravel()
    w = ((b - a)[:, None] * wg[None]).ravel()
    return s, w


@lru_cache(maxsize=8)
def _basis_tables(K: int, levels: int):
    """Per target row ``m`` the matrix ``theta_m w_q l_l(theta_m (1 - s_q))``.

    Rows are the ``K`` nodes followed by the interval end ``theta = 1``.
    """
    th, _ = _gl(K)
    targets = np.concatenate([th, [1.0]])
    s, w = _panel_rule(levels)
    # explicit weights: scipy otherwise derives them from a randomly permuted product
    diff = th[:, None] - th[None, :]
    np.fill_diagonal(diff, 1.0)
    wi = 1.0 / np.prod(diff, axis=1)
    interp = BarycentricInterpolator(th, np.eye(K), wi=wi / np.abs(wi).max())
    mats = [tm * w[:, None] * interp(tm * (1.0 - s)) for tm in targets]
    return targets, s, np.stack(mats)


def _collocation_weights(mu: np.ndarray, K: int) -> np.ndarray:
    """``W[m, l, i] = int_0^{theta_m} exp(-mu_i (theta_m - y)) l_l(y) dy`` (unit interval)."""
    mu_max = float(np.max(mu)) if mu.size else 0.0
    levels = max(4, int(math.ceil(math.log2(max(mu_max, 1.0)))) + 6)
    targets, s, mats = _basis_tables(K, levels)
    out = np.empty((K + 1, K, mu.size))
    for m, tm in enumerate(targets):
        E = np.exp(-np.outer(mu, tm * s))
        out[m] = (E @ mats[m]).T
    return out


class _Workspace:
    """Index tables and transforms of one grid in the solver's compact layout.

    Real fields are handled in the rfft half spectrum; the nonlinear term is
    kept only on the dealiased modes.
    """

    def __init__(self, grid: Grid, real: bool):
        self.grid = grid
        self.real = real
        g = grid
        self.xi = g.half(g.xi) if real else g.xi
        self.xi_sq = g.half(g.xi_sq) if real else g.xi_sq
        self.inv_sq = g.half(g.inv_xi_sq) if real else g.inv_xi_sq
        mask = g.half(g.dealias_mask) if real else g.dealias_mask
        self.shape = self.xi_sq.shape
        self.idx = np.flatnonzero(mask.ravel())
        self.lam, self.inv = np.unique(self.xi_sq.ravel()[self.idx], return_inverse=True)
        self.xi_m = self.xi.reshape(g.d, -1)[:, self.idx]
        self.inv_sq_m = self.inv_sq.ravel()[self.idx]
        self.scale = float(g.N) ** g.d
        self._wcache: dict = {}

    # transforms --------------------------------------------------------
    def to_compact(self, c: np.ndarray) -> np.ndarray:
        return self.grid.half(c) if self.real else c

    def to_full(self, c: np.ndarray) -> np.ndarray:
        return sp._fill_hermitian(c, self.grid.N, self.grid.d) if self.real else c

    def phys(self, c):
        axes = tuple(range(-self.grid.d, 0))
        if self.real:
            return sfft.irfftn(c * self.scale, s=self.grid.shape, axes=axes, workers=sp._WORKERS)
        return sfft.ifftn(c * self.scale, axes=axes, workers=sp._WORKERS)

    def spec(self, u):
        axes = tuple(range(-self.grid.d, 0))
        if self.real:
            return sfft.rfftn(u, axes=axes, workers=sp._WORKERS) / self.scale
        return sfft.fftn(u, axes=axes, workers=sp._WORKERS) / self.scale

    # nonlinear term ----------------------------------------------------
    def nonlinear(self, U, W=None, F=None) -> np.ndarray:
        """Compact ``P div(...)`` for a batch ``U`` of shape ``(B, d, ...)``.

        Without extras the product is ``u (x) u``.  With a background ``W`` the
        product is ``v (x) v + v (x) w + w (x) v``; ``F`` adds physical matrix
        samples ``(B, d*d, ...)``.  Returns shape ``(B, d, M)`` on dealiased modes.
        """
        d = self.grid.d
        B = U.shape[0]
        up = self.phys(U)
        if W is not None:
            wp = self.phys(W)
            sp_ = up + wp
        iu = np.triu_indices(d)
        if W is None:
            prod = up[:, iu[1]] * up[:, iu[0]]
        else:
            prod = sp_[:, iu[1]] * sp_[:, iu[0]] - wp[:, iu[1]] * wp[:, iu[0]]
        if F is not None:
            Fp = F.reshape((B, d, d) + F.shape[2:])
            prod = prod + Fp[:, iu[0], iu[1]]
            off = iu[0] != iu[1]
            if np.any(off):
                # keep an asymmetric forcing exact: add the lower triangle separately
                lower = Fp[:, iu[1][off], iu[0][off]] - Fp[:, iu[0][off], iu[1][off]]
            else:
                lower = None
        else:
            lower = None
        ph = self.spec(prod).reshape(B, len(iu[0]), -1)[..., self.idx]
        table = [[None] * d for _ in range(d)]
        for n, (i, j) in enumerate(zip(*iu)):
            table[i][j] = table[j][i] = ph[:, n]
        if lower is not None:
            lo = self.spec(lower).reshape(B, lower.shape[1], -1)[..., self.idx]
            k = 0
            for n, (i, j) in enumerate(zip(*iu)):
                if i != j:
                    table[j][i] = table[j][i] + lo[:, k]
                    k += 1
        out = np.empty((B, d, self.idx.size), np.complex128)
        xm = self.xi_m
        for i in range(d):
            acc = 1j * xm[0] * table[i][0]
            for j in range(1, d):
                acc = acc + 1j * xm[j] * table[i][j]
            out[:, i] = acc
        dot = xm[0] * out[:, 0]
        for j in range(1, d):
            dot = dot + xm[j] * out[:, j]
        return out - xm[None] * (dot * self.inv_sq_m)[:, None]

    def scatter(self, base: np.ndarray, vals: np.ndarray, sign: float = -1.0) -> np.ndarray:
        """Return ``base + sign * vals`` with ``vals`` living on the compact modes."""
        out = base.copy()
        flat = out.reshape(out.shape[:-self.grid.d] + (-1,))
        flat[..., self.idx] += sign * vals
        return out

    def weights(self, h: float, K: int) -> np.ndarray:
        key = (h, K)
        W = self._wcache.get(key)
        if W is None:
            W = _collocation_weights(self.lam * h, K) * h
            if len(self._wcache) > 64:
                self._wcache.clear()
            self._wcache[key] = W
        return W


@lru_cache(maxsize=16)
def _workspace(grid: Grid, real: bool) -> _Workspace:
    return _Workspace(grid, real)


# --------------------------------------------------------------------------
# local solver


@dataclass
class SolveResult:
    """Outcome of :func:`solve_local` / :func:`solve_perturbed`."""

    trajectory: Trajectory
    T_est: float
    blowup_declared: bool
    reason: str
    notes: list = field(default_factory=list)


def _contract(Wg: np.ndarray, Nn: np.ndarray) -> np.ndarray:
    """``out[m, d, k] = sum_l Wg[m, l, k] Nn[l, d, k]`` summed in a fixed order.

    Explicit accumulation instead of einsum keeps results bit-identical across
    processes (SIMD reductions depend on array alignment).
    """
    out = Wg[:, 0, None, :] * Nn[0][None]
    for l in range(1, Nn.shape[0]):
        out += Wg[:, l, None, :] * Nn[l][None]
    return out


def _sweeps(ws: _Workspace, c0, h, K, omega, cfg, W_at=None, F_at=None, t0=0.0):
    """Solve one collocation interval; returns (nodes, end, sweeps, converged, finite)."""
    th, _ = _gl(K)
    Wt = ws.weights(h, K)
    Wg = Wt[:, :, ws.inv]  # (K+1, K, M)
    lin = np.exp(-np.multiply.outer(th * h, ws.xi_sq))  # (K, ...)
    lin_nodes = lin[:, None] * c0[None]
    U = lin_nodes.copy()
    Wn = None if W_at is None else np.stack([W_at(t0 + t * h) for t in th])
    Fn = None if F_at is None else np.stack([F_at(t0 + t * h) for t in th])
    scale = max(omega, 1e-300)
    fac = 2.0 if ws.real else 1.0
    prev = math.inf
    converged = False
    n = 0
    for n in range(1, cfg.max_sweeps + 1):
        Nn = ws.nonlinear(U, Wn, Fn)
        duh = _contract(Wg[:K], Nn)
        U_new = ws.scatter(lin_nodes, duh)
        diff = fac * float(np.max(np.sum(np.abs(U_new - U), axis=tuple(range(1, U.ndim)))))
        U = U_new
        if not np.isfinite(diff):
            return U, None, n, False, False
        if diff <= cfg.picard_tol * scale:
            converged = True
            break
        if n >= 3 and diff > 2.0 * prev:
            return U, None, n, False, True
        prev = diff
    Nn = ws.nonlinear(U, Wn, Fn)
    end_lin = np.exp(-h * ws.xi_sq) * c0
    end = ws.scatter(end_lin, _contract(Wg[K:], Nn)[0])
    if not np.all(np.isfinite(end)):
        return U, None, n, False, False
    return U, end, n, converged, True


def _check_divfree(f: SpectralField, what: str):
    tol = 1e-10 * max(sp.l2_norm(f) / math.sqrt(f.grid.volume), 1e-300)
    if sp.divergence_residual(f) > tol:
        raise NotDivergenceFreeError(f"{what} is not divergence free")


def _sup(f_c, grid, real, refine):
    return sp.sup_norm(SpectralField(grid, f_c, real), refine)


def _march(u0: SpectralField, cfg: SolverConfig, w: Trajectory | None = None,
           f: Trajectory | None = None, T: float | None = None) -> SolveResult:
    g = u0.grid
    real = u0.real and (w is None or w.fields[0].real) and (f is None or f.fields[0].real)
    ws = _workspace(g, real)
    T = cfg.T_horizon if T is None else T
    K = cfg.nodes
    if w is not None and (not w.covers(T) or w.grid != g):
        raise IntervalError("background trajectory does not cover [0, T] on this grid")
    if f is not None and (not f.covers(T) or f.grid != g):
        raise IntervalError("forcing trajectory does not cover [0, T] on this grid")
    W_at = None if w is None else (lambda t: ws.to_compact(w.coeffs_at(t)))
    F_at = None
    if f is not None:
        F_at = lambda t: ws.phys(ws.to_compact(f.coeffs_at(t)))

    c = ws.to_compact(u0.coeffs)
    traj = Trajectory(interp="heat")
    traj.meta.update({"solver": cfg.to_dict(), "proviso": "blowup is declared heuristically, never certified"})
    omega = sp.sup_norm(u0, cfg.refine_sup)
    omega_w = 0.0 if w is None else sp.sup_norm(w.fields[0], cfg.refine_sup)
    omega0 = omega
    u_field = SpectralField(g, u0.coeffs.copy(), real)
    traj.append(0.0, u_field, dt=0.0, omega=omega, lp=sp.lp_norm(u_field, cfg.p),
                energy=sp.energy(u_field), dissipation_integral=0.0, sweeps=0, converged=True,
                div_residual=sp.divergence_residual(u_field),
                support_xi1=sp.support_threshold(u_field.coeffs, g))
    if omega == 0 and w is None and f is None:
        traj.append(T, u_field.copy(), dt=T, omega=0.0, lp=0.0, energy=0.0,
                    dissipation_integral=0.0, sweeps=0, converged=True, div_residual=0.0,
                    support_xi1=math.inf)
        return SolveResult(traj, math.inf, False, "zero data: global, T_est = inf")

    t = 0.0
    diss = 0.0
    notes = []
    _, glw = _gl(K)
    steps = 0
    while t < T * (1 - 1e-14):
        if steps >= cfg.max_steps:
            return SolveResult(traj, t, False, "max_steps reached", notes)
        drive = omega + omega_w
        h_law = step_length(drive, cfg.C_solve)
        if h_law < cfg.dt_floor:
            return SolveResult(traj, t, True, "dt below floor: blowup declared", notes)
        h = min(h_law, T - t)
        if cfg.dt_max is not None:
            h = min(h, cfg.dt_max)
        for halving in range(cfg.max_halvings + 1):
            U, end, n_sw, conv, finite = _sweeps(ws, c, h, K, drive, cfg, W_at, F_at, t)
            if end is not None:
                break
            notes.append(f"t={t:.6g}: contraction failed at dt={h:.3g}, halving")
            h *= 0.5
        else:
            raise NumericalDivergenceError(
                f"Picard sweeps failed after {cfg.max_halvings} halvings at t={t}", traj.records)
        if not conv:
            notes.append(f"t={t:.6g}: accepted after {n_sw} sweeps without reaching tolerance")
        # dissipation over the interval from the node values
        dis_nodes = np.array([sp.dissipation_rate(SpectralField(g, ws.to_full(U[m]), real)) for m in range(K)])
        diss += h * float(np.dot(glw, dis_nodes))
        t = t + h
        c = end
        u_field = SpectralField(g, ws.to_full(c), real)
        omega = sp.sup_norm(u_field, cfg.refine_sup)
        if w is not None:
            omega_w = sp.sup_norm(w.at(min(t, w.t_end)), cfg.refine_sup)
        steps += 1
        traj.append(t, u_field, dt=h, omega=omega, lp=sp.lp_norm(u_field, cfg.p),
                    energy=sp.energy(u_field), dissipation_integral=diss, sweeps=n_sw,
                    converged=conv, div_residual=sp.divergence_residual(u_field),
                    support_xi1=sp.support_threshold(u_field.coeffs, g))
        if not math.isfinite(omega):
            raise NumericalDivergenceError(f"non-finite sup norm at t={t}", traj.records)
        if omega0 > 0 and omega > cfg.omega_cap_factor * omega0:
            return SolveResult(traj, t, True, "omega cap exceeded: blowup declared", notes)
    return SolveResult(traj, math.inf, False, "T_horizon reached", notes)


def solve_local(u0: SpectralField, config: SolverConfig | None = None) -> SolveResult:
    """March the mild equation from ``u0`` with the step law of the local theory.

    Raises:
        NotDivergenceFreeError: ``u0`` has a nonzero divergence.
        NumericalDivergenceError: an interval cannot be contracted even after
            the allowed halvings.
    """
    cfg = config or SolverConfig()
    _check_divfree(u0, "initial data")
    return _march(u0, cfg)


def solve_perturbed(v0: SpectralField, w: Trajectory | None = None, f: Trajectory | None = None,
                    T: float | None = None, config: SolverConfig | None = None) -> SolveResult:
    """Mild solver for the perturbed system around a background ``w`` with forcing ``div f``.

    ``v = e^{t Delta} v0 - B(v, v) - B(v, w) - B(w, v) - A P div f``; ``f`` is a
    trajectory of ``d*d`` matrix fields with ``(div f)_i = sum_j d_j f_ij``.  The
    step law uses ``||v||_inf + ||w||_inf``.  With ``w`` and ``f`` absent this is
    :func:`solve_local`.
    """
    cfg = config or SolverConfig()
    _check_divfree(v0, "initial data")
    if T is not None:
        cfg = SolverConfig(**{**cfg.to_dict(), "T_horizon": T})
    return _march(v0, cfg, w, f)


# --------------------------------------------------------------------------
# Duhamel integrals on trajectories


def _breakpoints(*trajs, t):
    pts = {0.0, float(t)}
    for tr in trajs:
        pts.update(x for x in tr.times if 0 < x < t)
    return np.array(sorted(pts))


def bilinear_B(u: Trajectory, v: Trajectory, t: float, nodes: int = 16) -> SpectralField:
    """``B(u, v)(t)`` by composite Gauss-Legendre quadrature over the union of sample times.

    The trajectories are interpolated linearly in spectral coefficients; the
    heat factor is applied exactly at every node.

    Raises:
        IntervalError: a trajectory does not cover ``[0, t]``.
    """
    if not (u.covers(t) and v.covers(t)):
        raise IntervalError(f"trajectories do not cover [0, {t}]")
    g = u.grid
    if v.grid != g:
        raise sp.GridMismatchError("trajectories live on different grids")
    real = u.fields[0].real and v.fields[0].real
    out = np.zeros((g.d,) + g.shape, np.complex128)
    if t == 0:
        return SpectralField(g, out, real)
    x, w = _gl(nodes)
    bp = _breakpoints(u, v, t=t)
    same = u is v
    for a, b in zip(bp[:-1], bp[1:]):
        taus = a + (b - a) * x
        U = np.stack([u.coeffs_at(s, "linear") for s in taus])
        V = U if same else np.stack([v.coeffs_at(s, "linear") for s in taus])
        Nn = sp._nonlinear_batch(U, V, g, real, same=same)
        heat = np.exp(-np.multiply.outer(t - taus, g.xi_sq))
        out += (b - a) * np.einsum("k,k...->...", w, heat[:, None] * Nn)
    return sp.symmetrize(SpectralField(g, out, real))


def duhamel_forcing(f: Trajectory, t: float, nodes: int = 16) -> SpectralField:
    """``A_0 P div f (t) = int_0^t e^{(t-s) Delta} P div f(s) ds`` for a matrix-field trajectory."""
    if not f.covers(t):
        raise IntervalError(f"forcing does not cover [0, {t}]")
    g = f.grid
    out = np.zeros((g.d,) + g.shape, np.complex128)
    if t == 0:
        return SpectralField(g, out, f.fields[0].real)
    x, w = _gl(nodes)
    bp = _breakpoints(f, t=t)
    for a, b in zip(bp[:-1], bp[1:]):
        for s, ws_ in zip(a + (b - a) * x, w):
            Fm = f.at(s, "linear")
            out += (b - a) * ws_ * np.exp(-(t - s) * g.xi_sq) * sp.div_matrix(Fm).coeffs
    return sp.symmetrize(SpectralField(g, out, f.fields[0].real))


def _duhamel_lattice(u_coeffs: np.ndarray, times: np.ndarray, g: Grid, real: bool,
                     nodes: int) -> np.ndarray:
    """``B(u, u)`` at every lattice time for a trajectory sampled on ``times``.

    Uses ``B(t_m) = e^{(t_m - t_{m-1}) Delta} B(t_{m-1}) + int_{t_{m-1}}^{t_m}``
    with heat-aware interpolation of ``u`` between samples.
    """
    x, w = _gl(nodes)
    out = np.zeros_like(u_coeffs)
    xs = g.xi_sq
    for m in range(1, len(times)):
        ta, tb = times[m - 1], times[m]
        h = tb - ta
        taus = ta + h * x
        ua, ub = u_coeffs[m - 1], u_coeffs[m]
        eb = np.exp(-h * xs)
        U = np.stack([np.exp(-(s - ta) * xs) * ua + ((s - ta) / h) * (ub - eb * ua) for s in taus])
        Nn = sp._nonlinear_batch(U, U, g, real, same=True)
        acc = eb * out[m - 1]
        for k in range(nodes):
            acc = acc + h * w[k] * np.exp(-(tb - taus[k]) * xs) * Nn[k]
        out[m] = acc
    return out


# --------------------------------------------------------------------------
# Picard iteration


@dataclass
class IterationRecord:
    """Diagnostics of one Picard iterate ``u^(n)``.

    ``sup_diff`` and ``rho`` refer to ``u^(n+1) - u^(n)``; ``rho`` is the
    largest threshold with all but ``support_tol`` of that difference's
    spectral l2 mass in ``{xi_1 >= rho}``.
    """

    n: int
    sup_u: float
    sup_diff: float
    rho: float
    outside_fraction: float = float("nan")


@dataclass
class PicardResult:
    times: np.ndarray
    records: list
    final: Trajectory
    iterates: list | None = None


def default_time_lattice(T: float, levels: int = 12) -> np.ndarray:
    """``0`` followed by ``T * 2^-k`` for ``k = levels..0``."""
    return np.concatenate([[0.0], T * 2.0 ** -np.arange(levels, -1, -1.0)])


def _lattice_sup(cs: np.ndarray, g: Grid, real: bool, refine: bool) -> float:
    return max(sp.sup_norm(SpectralField(g, c, real), refine) for c in cs)


def _floor_noise(diff: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Zero coefficients at the FFT round-off floor of the iterates."""
    floor = 64 * np.finfo(float).eps * float(np.max(np.abs(ref), initial=0.0))
    return np.where(np.abs(diff) > floor, diff, 0.0)


def picard_iterate(u0: SpectralField, n_max: int, T_horizon: float = 1.0, times=None,
                   nodes: int = 4, rho: float | None = None, support_tol: float = 1e-8,
                   keep_iterates: bool = False, refine_sup: bool = False) -> PicardResult:
    """The sequence ``u^(0) = 0``, ``u^(n+1) = e^{t Delta} u0 - B(u^(n), u^(n))`` on a time lattice.

    Iterates are stored on ``times``; the default lattice is ``0`` followed by
    ``T_horizon * 2^-k`` for ``k = 12..0``, graded towards ``t = 0`` where the
    heat factor of high-frequency data varies fastest.  One record per ``n = 0..n_max`` holds sup norms over
    the lattice and the support statistics of ``u^(n+1) - u^(n)``; when
    ``rho`` is given the mass fraction outside ``{xi_1 >= (n+1) rho}`` is
    recorded as well.

    Raises:
        NotDivergenceFreeError: ``u0`` has a nonzero divergence.
        NumericalDivergenceError: an iterate overflows; the records so far are attached.
    """
    _check_divfree(u0, "initial data")
    g = u0.grid
    real = u0.real
    ts = default_time_lattice(T_horizon) if times is None else np.asarray(times, float)
    if ts[0] != 0 or np.any(np.diff(ts) <= 0):
        raise IntervalError("time lattice must start at 0 and increase")
    lin = np.stack([np.exp(-t * g.xi_sq) * u0.coeffs for t in ts])
    cur = np.zeros_like(lin)
    records = []
    kept = [cur] if keep_iterates else None
    for n in range(n_max + 1):
        if n == 0:
            nxt = lin.copy()
        else:
            nxt = lin - _duhamel_lattice(cur, ts, g, real, nodes)
        if real:
            nxt = np.stack([sp.symmetrize(SpectralField(g, c)).coeffs for c in nxt])
        if not np.all(np.isfinite(nxt)):
            raise NumericalDivergenceError(f"iterate {n + 1} is not finite", records)
        diff = _floor_noise(nxt - cur, nxt)
        rec = IterationRecord(
            n=n,
            sup_u=_lattice_sup(cur, g, real, refine_sup),
            sup_diff=_lattice_sup(diff, g, real, refine_sup),
            rho=sp.support_threshold(diff, g, support_tol),
        )
        if rho is not None:
            rec.outside_fraction = sp.mass_outside_halfspace(diff, g, (n + 1) * rho)
        records.append(rec)
        cur = nxt
        if keep_iterates:
            kept.append(cur)
    final = Trajectory(interp="heat")
    for t, c in zip(ts, cur):
        final.append(float(t), SpectralField(g, c, real))
    return PicardResult(ts, records, final, kept)


def _check_halfspace(u0: SpectralField, rho: float, tol: float = 1e-12):
    frac = sp.mass_outside_halfspace(u0.coeffs, u0.grid, rho)
    if frac > tol:
        raise SupportError(f"initial spectrum has mass fraction {frac:.3g} outside xi_1 >= {rho}")


def frequency_support_tracker(u0: SpectralField, rho: float, n_max: int, T_horizon: float = 1.0,
                              times=None, nodes: int = 4) -> PicardResult:
    """Picard records with the half-space support statistics of every difference.

    Raises:
        SupportError: the spectrum of ``u0`` is not in ``{xi_1 >= rho}``.
    """
    _check_halfspace(u0, rho)
    return picard_iterate(u0, n_max, T_horizon, times, nodes, rho=rho)


@dataclass
class GlobalCriterionResult:
    """Outcome of the frequency-superposition global criterion.

    ``sums[n0]`` is ``M(n0) + M(n0+1)`` with ``M(n) = ||u^(n)||_{L^inf_{x,t}}``
    over ``[0, T_probe]``; ``margins[n0] = (n0+1) rho - 4 C (sums[n0])``.
    ``cauchy_ok`` checks ``||u^(l+1) - u^(l)|| <= M0 / 2^(l - n0)`` and
    ``ratios`` lists successive difference ratios for ``l >= n0 + 1``.
    """

    satisfied: bool
    best_n0: int
    margin: float
    C_glob: float
    T_probe: float
    sums: list
    margins: list
    diffs: list
    cauchy_ok: bool | None = None
    ratios: list = field(default_factory=list)
    records: list = field(default_factory=list)
    caveat: str = "L^inf in time is probed on [0, T_probe] only"


def check_global_criterion(u0: SpectralField, rho: float, n0_max: int = 2, C_glob: float | None = None,
                           T_probe: float = 1.0, n_extra: int = 4, times=None,
                           nodes: int = 4) -> GlobalCriterionResult:
    """Evaluate ``4 C (M(n0) + M(n0+1)) <= (n0 + 1) rho`` for ``n0 = 0..n0_max``.

    ``C_glob`` defaults to the measured decay constant.  When the criterion
    holds, ``n_extra`` further iterates feed the geometric-decay check.

    Raises:
        SupportError: the spectrum of ``u0`` is not in ``{xi_1 >= rho}``.
    """
    from .besov import measured_decay_constant

    _check_halfspace(u0, rho)
    C = measured_decay_constant() if C_glob is None else float(C_glob)
    n_total = n0_max + 1 + n_extra
    res = picard_iterate(u0, n_total, T_probe, times, nodes, rho=rho)
    M = [r.sup_u for r in res.records]  # M[n] = ||u^(n)||
    diffs = [r.sup_diff for r in res.records]  # diffs[l] = ||u^(l+1) - u^(l)||
    sums = [M[n] + M[n + 1] for n in range(n0_max + 1)]
    margins = [(n + 1) * rho - 4 * C * sums[n] for n in range(n0_max + 1)]
    ok = [m >= 0 for m in margins]
    if any(ok):
        best = ok.index(True)
    else:
        best = int(np.argmax(margins))
    out = GlobalCriterionResult(any(ok), best, margins[best], C, T_probe, sums, margins, diffs,
                                records=res.records)
    if out.satisfied:
        M0 = sums[best]
        floor = 1e-13 * max(M)
        checks = [diffs[l] <= M0 / 2 ** (l - best) * (1 + 1e-12) for l in range(best + 1, len(diffs))]
        out.cauchy_ok = all(checks)
        for l in range(best + 1, len(diffs) - 1):
            if diffs[l] > floor and diffs[l + 1] > floor:
                out.ratios.append(diffs[l + 1] / diffs[l])
    return out
