"""Blowup-rate functionals and concentration diagnostics on trajectories.

Nothing here certifies a singularity.  The functionals are evaluated on
stored samples; a blowup time is whatever the caller supplies, usually the
time at which the solver declared blowup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .besov import low_pass, measured_decay_constant, sobolev_norm
from .errors import DomainError, ResolutionError
from .spectral import Grid, SpectralField, Trajectory, lp_norm, sup_norm, to_physical, to_spectral

__all__ = [
    "Trace",
    "omega_trace",
    "rate_functional",
    "typeI_functional",
    "sigma_p",
    "select_concentration_times",
    "verify_concentration_times",
    "low_frequency_dominance",
    "locate_concentration",
    "ConcentrationPoint",
    "DiagnosticsReport",
    "diagnose",
    "self_similar_family",
]

DEFAULT_BALL_MULTIPLIER = 8.0


@dataclass
class Trace:
    """Samples ``(t_i, value_i)`` of a scalar functional."""

    name: str
    t: np.ndarray
    value: np.ndarray

    def rows(self):
        return list(zip(self.t.tolist(), self.value.tolist()))

    def relative_spread(self) -> float:
        """``(max - min) / mean`` of the values; 0 for an all-zero trace."""
        v = np.asarray(self.value, float)
        m = float(np.mean(np.abs(v)))
        return 0.0 if m == 0 else float((v.max() - v.min()) / m)


def sigma_p(p: float, d: int) -> float:
    """Type-I exponent ``2 / (1 - d/p)``.

    Raises:
        DomainError: ``p <= d``.
    """
    if not p > d:
        raise DomainError(f"sigma_p needs p > d, got p={p}, d={d}")
    return 2.0 / (1.0 - d / p)


def _norm_series(traj: Trajectory, key: str, fn) -> np.ndarray:
    out = []
    for rec, f in zip(traj.records, traj.fields):
        v = rec.get(key) if rec else None
        out.append(fn(f) if v is None else v)
    return np.asarray(out, float)


def omega_trace(traj: Trajectory, refine=None) -> Trace:
    """``omega(t) = ||u(t)||_inf`` at the stored samples (recorded values reused)."""
    return Trace("omega", np.asarray(traj.times), _norm_series(traj, "omega", lambda f: sup_norm(f, refine)))


def _check_T(traj: Trajectory, T_est: float):
    if not T_est >= traj.times[-1]:
        raise DomainError("T_est must not precede the last stored time")


def rate_functional(traj: Trajectory, T_est: float, refine=None) -> Trace:
    """``(T_est - t)^{1/2} omega(t)``."""
    _check_T(traj, T_est)
    om = omega_trace(traj, refine)
    return Trace("rate", om.t, np.sqrt(np.maximum(T_est - om.t, 0.0)) * om.value)


def typeI_functional(traj: Trajectory, T_est: float, p: float) -> Trace:
    """``(T_est - t) ||u(t)||_p^{sigma_p}``.

    Raises:
        DomainError: ``p <= d``.
    """
    s = sigma_p(p, traj.grid.d)
    _check_T(traj, T_est)
    t = np.asarray(traj.times)
    norms = np.array([lp_norm(f, p) for f in traj.fields])
    return Trace("typeI", t, (T_est - t) * norms**s)


def select_concentration_times(t, omega, C_conc: float | None = None) -> list[int]:
    """Indices of times ``tau_n`` with growing sup norm.

    ``tau_0`` is the first sample.  The next candidate is the earliest sample
    with ``omega >= 100 C^2 omega(tau_prev)``; it is then moved back to the
    latest sample ``s`` not after it with ``omega(s) >= max omega / 2`` on
    ``[tau_prev, candidate]``.  Scanning stops when the trace is exhausted.
    """
    C = measured_decay_constant() if C_conc is None else float(C_conc)
    om = np.asarray(omega, float)
    if om.size == 0:
        return []
    factor = 100.0 * C * C
    picks = [0]
    while True:
        prev = picks[-1]
        later = np.nonzero(om[prev + 1 :] >= factor * om[prev])[0]
        if later.size == 0 or om[prev] == 0:
            break
        cand = prev + 1 + int(later[0])
        half = 0.5 * float(np.max(om[prev : cand + 1]))
        ok = np.nonzero(om[prev + 1 : cand + 1] >= half)[0]
        picks.append(prev + 1 + int(ok[-1]))
    return picks


def verify_concentration_times(omega, picks, C_conc: float) -> bool:
    """Re-check ``omega(tau_n) >= max(100 C^2 omega(tau_{n-1}), sup omega / 2)`` exactly."""
    om = np.asarray(omega, float)
    factor = 100.0 * C_conc * C_conc
    for a, b in zip(picks[:-1], picks[1:]):
        if not b > a:
            return False
        if om[b] < factor * om[a] or om[b] < 0.5 * om[a : b + 1].max():
            return False
    return True


def low_frequency_dominance(u: SpectralField, omega: float, C_conc: float | None = None,
                            refine=None) -> tuple[bool, float]:
    """``||P_{<=beta} u||_inf / omega`` with ``beta = 100 C omega``; dominant when at least 1/2.

    Raises:
        DomainError: ``omega = 0``.
    """
    if omega <= 0:
        raise DomainError("low-frequency dominance needs omega > 0")
    C = measured_decay_constant() if C_conc is None else float(C_conc)
    beta = 100.0 * C * omega
    r = sup_norm(low_pass(u, beta), refine) / omega
    return r >= 0.5, float(r)


@dataclass
class ConcentrationPoint:
    """Concentration point of one snapshot and the local mass around it."""

    t: float
    omega: float
    beta: float
    radius: float
    x: np.ndarray
    index: tuple
    mass: float
    bound_ratio: float
    dominance_ratio: float = float("nan")
    self_similar_scale: float = float("nan")
    potential_scale: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "t": self.t, "omega": self.omega, "beta": self.beta, "radius": self.radius,
            "x": [float(v) for v in self.x], "mass": self.mass, "bound_ratio": self.bound_ratio,
            "dominance_ratio": self.dominance_ratio, "self_similar_scale": self.self_similar_scale,
            "potential_scale": self.potential_scale,
        }


def _ball_mask(grid: Grid, center: np.ndarray, radius: float) -> np.ndarray:
    c = center.reshape((grid.d,) + (1,) * grid.d)
    dx = (grid.x - c + grid.side / 2) % grid.side - grid.side / 2
    return np.sum(dx**2, axis=0) <= radius**2


def _magnitude(u: SpectralField) -> np.ndarray:
    v = to_physical(u)
    return np.sqrt(np.sum(np.abs(v) ** 2, axis=0))


def locate_concentration(u: SpectralField, omega: float, p: float, M: float = DEFAULT_BALL_MULTIPLIER,
                         C_conc: float | None = None, t: float = 0.0) -> ConcentrationPoint:
    """Concentration point ``x*`` and local ``L^p`` mass on the ball of radius ``M / beta``.

    ``x*`` maximizes ``|P_{<=beta} u|`` over the lattice, ties going to the
    lexicographically smallest index.  The bound ratio is
    ``mass / omega^{1 - d/p}``.

    Raises:
        DomainError: ``omega <= 0``, ``p < 1`` or ``M <= 0``.
        ResolutionError: the ball radius is below one lattice cell.
    """
    if omega <= 0 or p < 1 or M <= 0:
        raise DomainError("locate_concentration needs omega > 0, p >= 1, M > 0")
    g = u.grid
    C = measured_decay_constant() if C_conc is None else float(C_conc)
    beta = 100.0 * C * omega
    radius = M / beta
    if radius < g.spacing:
        raise ResolutionError(f"ball radius {radius:.3g} is below the lattice spacing {g.spacing:.3g}")
    filt = _magnitude(low_pass(u, beta))
    idx = np.unravel_index(int(np.argmax(filt)), filt.shape)
    x = np.array([g.x[i][idx] for i in range(g.d)])
    ball = _ball_mask(g, x, radius)
    mag = _magnitude(u)
    if math.isinf(p):
        mass = float(np.max(mag[ball]))
        expo = 1.0
    else:
        mass = float((np.sum(mag[ball] ** p) * g.cell_volume) ** (1.0 / p))
        expo = 1.0 - g.d / p
    return ConcentrationPoint(t, float(omega), beta, radius, x, tuple(int(i) for i in idx), mass,
                              mass / omega**expo)


@dataclass
class DiagnosticsReport:
    """Traces and concentration data of one trajectory."""

    T_est: float
    p: float
    C_conc: float
    omega: Trace
    rate: Trace
    typeI: Trace | None
    taus: list
    points: list = field(default_factory=list)
    selection_verified: bool = True
    proviso: str = "T_est is a declared or user-supplied time; blowup is not certified"

    def concentration_json(self) -> dict:
        return {
            "T_est": self.T_est, "p": self.p, "C_conc": self.C_conc, "proviso": self.proviso,
            "selection_verified": self.selection_verified,
            "tau": [float(self.omega.t[i]) for i in self.taus],
            "points": [pt.as_dict() for pt in self.points],
        }


def diagnose(traj: Trajectory, T_est: float, p: float = 6.0, C_conc: float | None = None,
             M: float = DEFAULT_BALL_MULTIPLIER) -> DiagnosticsReport:
    """All functionals plus concentration data at the selected times.

    Snapshots whose ball would be under-resolved are skipped.  Both
    concentration scales are reported: ``sqrt(T - t)`` and
    ``||u||_{H^{d/2-1}}^{-2/(d-2)}`` (undefined for ``d = 2``).
    """
    C = measured_decay_constant() if C_conc is None else float(C_conc)
    om = omega_trace(traj)
    rate = rate_functional(traj, T_est)
    tI = typeI_functional(traj, T_est, p) if p > traj.grid.d else None
    taus = select_concentration_times(om.t, om.value, C)
    rep = DiagnosticsReport(T_est, p, C, om, rate, tI, taus,
                            selection_verified=verify_concentration_times(om.value, taus, C))
    d = traj.grid.d
    for i in taus:
        u, w = traj.fields[i], float(om.value[i])
        if w <= 0:
            continue
        try:
            pt = locate_concentration(u, w, p, M, C, t=float(om.t[i]))
        except ResolutionError:
            continue
        pt.dominance_ratio = low_frequency_dominance(u, w, C)[1]
        pt.self_similar_scale = math.sqrt(max(T_est - pt.t, 0.0))
        if d > 2:
            h = sobolev_norm(u, d / 2 - 1)
            pt.potential_scale = h ** (-2.0 / (d - 2)) if h > 0 else math.inf
        rep.points.append(pt)
    return rep


def self_similar_family(grid: Grid, T: float, times, width: float = 0.3, amplitude: float = 1.0,
                        center=None) -> Trajectory:
    """Injected trajectory ``u(t) = (T-t)^{-1/2} V(x / sqrt(T-t))`` with a Gaussian ``V``.

    ``V(y) = amplitude * exp(-|y|^2 / width^2) e_1`` centred at ``center``
    (default: the lattice point nearest the box centre).  It is not a
    Navier-Stokes solution; it calibrates the functionals.
    """
    if center is None:
        center = np.full(grid.d, grid.spacing * (grid.N // 2))
    c = np.asarray(center, float).reshape((grid.d,) + (1,) * grid.d)
    dx = (grid.x - c + grid.side / 2) % grid.side - grid.side / 2
    r2 = np.sum(dx**2, axis=0)
    tr = Trajectory()
    for t in times:
        s = math.sqrt(T - t)
        V = amplitude * np.exp(-r2 / (s * width) ** 2) / s
        u = np.zeros((grid.d,) + grid.shape)
        u[0] = V
        tr.append(float(t), to_spectral(u, grid))
    tr.meta["center"] = np.asarray(center, float).tolist()
    tr.meta["T"] = T
    return tr
