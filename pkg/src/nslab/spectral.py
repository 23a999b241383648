"""Periodic-box spectral representation of vector fields.

The whole space R^d is replaced by the periodic box of side ``2*pi*Lambda``.
Fields are stored as Fourier-series coefficients on the lattice of
frequencies ``xi = k / Lambda`` with ``k`` an integer vector, in numpy FFT
order along every axis.  With this normalization a constant field ``c`` has a
single coefficient ``c`` at ``k = 0`` and

    u(x) = sum_k  u_hat[k] * exp(i xi_k . x).

Real fields (the default) carry Hermitian-symmetric coefficients.  Complex
fields are allowed for data whose spectrum sits in a half space, such as the
half-space family of the initial-data library; they skip every symmetry
check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GridMismatchError, IntervalError, SymmetryError

__all__ = [
    "Grid",
    "SpectralField",
    "Trajectory",
    "to_physical",
    "to_spectral",
    "leray_project",
    "heat_propagate",
    "nonlinear_div",
    "div_matrix",
    "sup_norm",
    "lp_norm",
    "l2_norm",
    "energy",
    "dissipation_rate",
    "divergence_residual",
    "symmetrize",
    "translate",
    "rescale",
    "wiener_norm",
    "set_threads",
    "support_threshold",
    "mass_outside_halfspace",
]

_WORKERS = 1
REFINE_SUP = True
"""Default for :func:`sup_norm`: evaluate on a 2x zero-padded grid."""


def set_threads(n: int) -> None:
    """Number of threads handed to scipy.fft."""
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True)
class Grid:
    """Frequency lattice and physical sample points of a periodic box.

    Args:
        d: spatial dimension, 2 or 3.
        N: points per axis, a power of two, at least 8.
        box_scale: Lambda; physical side ``2*pi*Lambda``, frequency spacing
            ``1/Lambda``.
        dealias: fraction of the half-band kept by the dealiasing mask.
    """

    d: int
    N: int
    box_scale: float = 1.0
    dealias: float = 2.0 / 3.0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise DomainError(f"d must be 2 or 3, got {self.d}")
        if self.N < 8 or self.N & (self.N - 1):
            raise DomainError(f"N must be a power of two >= 8, got {self.N}")
        if not self.box_scale > 0:
            raise DomainError("box_scale must be positive")
        if not 0 < self.dealias <= 1:
            raise DomainError("dealias fraction must lie in (0, 1]")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def side(self) -> float:
        return 2 * math.pi * self.box_scale

    @property
    def spacing(self) -> float:
        return self.side / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def volume(self) -> float:
        return self.side**self.d

    @property
    def kmax_dealiased(self) -> int:
        return int(math.floor(self.dealias * self.N / 2 + 1e-12))

    @cached_property
    def k1d(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.N, 1.0 / self.N)).astype(np.int64)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wave vectors, shape ``(d, N, ..., N)``."""
        return np.stack(np.meshgrid(*([self.k1d] * self.d), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequencies ``k / Lambda``, shape ``(d, N, ..., N)``."""
        return self.k / self.box_scale

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def inv_xi_sq(self) -> np.ndarray:
        """``1/|xi|^2`` with the zero mode set to 0."""
        out = np.zeros(self.shape)
        nz = self.xi_sq > 0
        out[nz] = 1.0 / self.xi_sq[nz]
        return out

    @cached_property
    def xi_deriv(self) -> np.ndarray:
        """Frequencies used by derivatives and the Leray projector.

        Nyquist components are set to 0: the Nyquist mode is its own Hermitian
        partner, so an odd multiplier there cannot keep a real field real.
        """
        return np.where(np.abs(self.k) == self.N // 2, 0.0, self.xi)

    @cached_property
    def inv_xi_deriv_sq(self) -> np.ndarray:
        sq = np.sum(self.xi_deriv**2, axis=0)
        out = np.zeros(self.shape)
        nz = sq > 0
        out[nz] = 1.0 / sq[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kc = self.kmax_dealiased
        return np.all(np.abs(self.k) <= kc, axis=0)

    @cached_property
    def x(self) -> np.ndarray:
        """Physical sample coordinates, shape ``(d, N, ..., N)``."""
        x1 = np.arange(self.N) * self.spacing
        return np.stack(np.meshgrid(*([x1] * self.d), indexing="ij"))

    def half(self, arr: np.ndarray) -> np.ndarray:
        """Restrict a full-spectrum array to the rfft half along the last axis."""
        return arr[..., : self.N // 2 + 1]

    def with_scale(self, box_scale: float) -> "Grid":
        return Grid(self.d, self.N, box_scale, self.dealias)


@dataclass
class SpectralField:
    """Fourier coefficients of an ``m``-component field on ``grid``.

    ``coeffs`` has shape ``(m, N, ..., N)``; velocity fields have ``m = d``,
    matrix fields are stored flattened row-major with ``m = d*d``.
    """

    grid: Grid
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.ndim == self.grid.d:
            self.coeffs = self.coeffs[None]
        if self.coeffs.shape[1:] != self.grid.shape:
            raise GridMismatchError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int | None = None, real: bool = True):
        m = grid.d if ncomp is None else ncomp
        return cls(grid, np.zeros((m,) + grid.shape, np.complex128), real)

    @classmethod
    def from_physical(cls, grid: Grid, samples) -> "SpectralField":
        return to_spectral(samples, grid)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.real)

    def like(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.real)

    def _check(self, other):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.real and other.real)

    def __neg__(self):
        return self.like(-self.coeffs)

    def __mul__(self, a):
        a = complex(a)
        return SpectralField(self.grid, self.coeffs * a, self.real and a.imag == 0)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / a)


# --------------------------------------------------------------------------
# symmetry helpers


def _negate_index(c: np.ndarray, d: int) -> np.ndarray:
    """Return ``c[-k]`` along the last ``d`` axes (FFT ordering)."""
    axes = tuple(range(c.ndim - d, c.ndim))
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


def _hermitian_defect(c: np.ndarray, d: int) -> float:
    return float(np.max(np.abs(c - np.conj(_negate_index(c, d))), initial=0.0))


def symmetrize(f: SpectralField) -> SpectralField:
    """Project a real field's coefficients onto the Hermitian subspace."""
    if not f.real:
        return f
    c = f.coeffs
    return f.like(0.5 * (c + np.conj(_negate_index(c, f.grid.d))))


def _fill_hermitian(half: np.ndarray, N: int, d: int) -> np.ndarray:
    """Rebuild a full spectrum from its rfft half along the last axis."""
    lead = half.shape[:-1]
    full = np.empty(lead + (N,), dtype=np.complex128)
    full[..., : N // 2 + 1] = half
    other = tuple(range(half.ndim - d, half.ndim - 1))
    neg = half
    if other:
        neg = np.roll(np.flip(half, axis=other), 1, axis=other)
    full[..., N // 2 + 1 :] = np.conj(neg[..., N // 2 - 1 : 0 : -1])
    return full


# --------------------------------------------------------------------------
# transforms


def _axes(d: int) -> tuple:
    return tuple(range(-d, 0))


def _physical(c: np.ndarray, grid: Grid, real: bool) -> np.ndarray:
    d, N = grid.d, grid.N
    scale = float(N) ** d
    if real:
        return sfft.irfftn(grid.half(c) * scale, s=grid.shape, axes=_axes(d), workers=_WORKERS)
    return sfft.ifftn(c * scale, axes=_axes(d), workers=_WORKERS)


def _spectral(u: np.ndarray, grid: Grid) -> np.ndarray:
    d, N = grid.d, grid.N
    if np.iscomplexobj(u):
        return sfft.fftn(u, axes=_axes(d), workers=_WORKERS) / float(N) ** d
    half = sfft.rfftn(u, axes=_axes(d), workers=_WORKERS) / float(N) ** d
    return _fill_hermitian(half, N, d)


def to_physical(f: SpectralField, check: bool = True) -> np.ndarray:
    """Sample ``f`` on the physical lattice; shape ``(m, N, ..., N)``.

    Raises:
        SymmetryError: a real field whose coefficients are not Hermitian.
    """
    if f.real and check:
        scale = float(np.max(np.abs(f.coeffs), initial=0.0))
        if _hermitian_defect(f.coeffs, f.grid.d) > 1e-10 * max(scale, 1e-300):
            raise SymmetryError("coefficients of a real field are not Hermitian-symmetric")
    return _physical(f.coeffs, f.grid, f.real)


def to_spectral(samples, grid: Grid) -> SpectralField:
    """Inverse of :func:`to_physical`; complex samples give a complex field."""
    u = np.asarray(samples)
    if u.ndim == grid.d:
        u = u[None]
    if u.shape[1:] != grid.shape:
        raise GridMismatchError(f"samples of shape {u.shape} do not match grid {grid.shape}")
    real = not np.iscomplexobj(u)
    return SpectralField(grid, _spectral(u.astype(np.float64 if real else np.complex128), grid), real)


# --------------------------------------------------------------------------
# linear multipliers


def leray_project(f: SpectralField) -> SpectralField:
    """Apply ``I - xi xi^T / |xi|^2`` mode by mode; the zero mode is kept."""
    g = f.grid
    if f.ncomp != g.d:
        raise DomainError("Leray projection needs a d-component field")
    c = _leray(f.coeffs, g)
    return symmetrize(f.like(c))


def _leray(c: np.ndarray, g: Grid, half: bool = False) -> np.ndarray:
    xi = g.half(g.xi_deriv) if half else g.xi_deriv
    inv = g.half(g.inv_xi_deriv_sq) if half else g.inv_xi_deriv_sq
    dot = np.sum(xi * c, axis=-g.d - 1, keepdims=True)
    return c - xi * (dot * inv)


def heat_propagate(f: SpectralField, t: float) -> SpectralField:
    """Exact heat flow ``e^{t Delta} f`` (unit viscosity)."""
    if t < 0:
        raise DomainError(f"heat propagation needs t >= 0, got {t}")
    if t == 0:
        return f.copy()
    return symmetrize(f.like(f.coeffs * np.exp(-t * f.grid.xi_sq)))


def nonlinear_div(u: SpectralField, v: SpectralField, project: bool = True) -> SpectralField:
    """Dealiased pseudospectral ``P div(u (x) v)``.

    Component ``i`` is ``sum_j d_j (u_j v_i)``, i.e. ``(u . grad) v`` for
    divergence-free ``u``.  The product is formed on the physical lattice, the
    divergence is applied spectrally, modes outside the 2/3 mask are zeroed and
    the result is Leray-projected.
    """
    if u.grid != v.grid:
        raise GridMismatchError("nonlinear_div: u and v live on different grids")
    g = u.grid
    real = u.real and v.real
    out = _nonlinear_batch(u.coeffs[None], v.coeffs[None], g, real, u is v, project)[0]
    return SpectralField(g, out, real)


def _nonlinear_batch(uc, vc, g: Grid, real: bool, same: bool = False, project: bool = True,
                     extra=None) -> np.ndarray:
    """Batched core of :func:`nonlinear_div`.

    ``uc`` and ``vc`` have shape ``(B, d, N, ..., N)``.  ``extra`` optionally
    adds physical-space matrix samples ``(B, d*d, ...)`` to the product before
    the divergence, with the same ``[i, j] -> d_j`` convention.
    """
    d = g.d
    B = uc.shape[0]
    up = _physical(uc, g, real)
    vp = up if same else _physical(vc, g, real)
    if same and extra is None:
        iu = np.triu_indices(d)
        prod = up[:, iu[1]] * up[:, iu[0]]
        ph = _forward_batch(prod, g, real)
        # rebuild the symmetric d x d table of spectral products
        table = [[None] * d for _ in range(d)]
        for n, (i, j) in enumerate(zip(*iu)):
            table[i][j] = table[j][i] = ph[:, n]
    else:
        prod = (vp[:, :, None] * up[:, None, :]).reshape((B, d * d) + g.shape)
        if extra is not None:
            prod = prod + extra
        ph = _forward_batch(prod, g, real)
        table = [[ph[:, i * d + j] for j in range(d)] for i in range(d)]
    xi = g.half(g.xi_deriv) if real else g.xi_deriv
    mask = g.half(g.dealias_mask) if real else g.dealias_mask
    out = np.empty((B, d) + xi.shape[1:], np.complex128)
    for i in range(d):
        acc = 1j * xi[0] * table[i][0]
        for j in range(1, d):
            acc += 1j * xi[j] * table[i][j]
        out[:, i] = acc * mask
    if project:
        out = _leray(out, g, half=real)
    if real:
        return _fill_hermitian(out, g.N, d)
    return out


def _forward_batch(p: np.ndarray, g: Grid, real: bool) -> np.ndarray:
    """Forward transform; for real data only the rfft half is returned."""
    scale = float(g.N) ** g.d
    if real:
        return sfft.rfftn(p, axes=_axes(g.d), workers=_WORKERS) / scale
    return sfft.fftn(p, axes=_axes(g.d), workers=_WORKERS) / scale


def div_matrix(F: SpectralField, project: bool = True) -> SpectralField:
    """``P div F`` for a matrix field, ``(div F)_i = sum_j d_j F_ij``; dealiased."""
    g = F.grid
    d = g.d
    if F.ncomp != d * d:
        raise DomainError("div_matrix needs a d*d component field")
    c = F.coeffs.reshape((d, d) + g.shape)
    out = 1j * np.einsum("j...,ij...->i...", g.xi_deriv, c) * g.dealias_mask
    if project:
        out = _leray(out, g)
    return symmetrize(SpectralField(g, out, F.real))


# --------------------------------------------------------------------------
# norms


def _pad_full(c: np.ndarray, axis: int, N: int) -> np.ndarray:
    shape = list(c.shape)
    shape[axis] = 2 * N
    out = np.zeros(shape, np.complex128)
    h = N // 2
    src = [slice(None)] * c.ndim
    dst = [slice(None)] * c.ndim

    def put(ds, ss, factor=1.0):
        dst[axis], src[axis] = ds, ss
        out[tuple(dst)] += factor * c[tuple(src)]

    put(slice(0, h), slice(0, h))
    put(slice(h, h + 1), slice(h, h + 1), 0.5)
    put(slice(2 * N - h, 2 * N - h + 1), slice(h, h + 1), 0.5)
    put(slice(2 * N - h + 1, 2 * N), slice(h + 1, N))
    return out


def _pad_half_last(c: np.ndarray, N: int) -> np.ndarray:
    h = N // 2
    out = np.zeros(c.shape[:-1] + (N + 1,), np.complex128)
    out[..., :h] = c[..., :h]
    out[..., h] = 0.5 * c[..., h]
    return out


def _upsampled_sq_magnitude(f: SpectralField) -> np.ndarray:
    """``|u|^2`` on the 2x zero-padded lattice, one component at a time."""
    g = f.grid
    d, N = g.d, g.N
    acc = None
    scale = float(2 * N) ** d
    for comp in f.coeffs:
        if f.real:
            c = comp[..., : N // 2 + 1]
            for ax in range(d - 1):
                c = _pad_full(c, ax, N)
            c = _pad_half_last(c, N)
            vals = sfft.irfftn(c * scale, s=(2 * N,) * d, workers=_WORKERS)
            sq = vals * vals
        else:
            c = comp
            for ax in range(d):
                c = _pad_full(c, ax, N)
            vals = sfft.ifftn(c * scale, workers=_WORKERS)
            sq = vals.real**2 + vals.imag**2
        acc = sq if acc is None else acc + sq
    return acc


def _sq_magnitude(f: SpectralField) -> np.ndarray:
    u = _physical(f.coeffs, f.grid, f.real)
    if f.real:
        return np.sum(u * u, axis=0)
    return np.sum(u.real**2 + u.imag**2, axis=0)


def sup_norm(f: SpectralField, refine: bool | None = None) -> float:
    """Max over sample points of the Euclidean magnitude ``|u(x)|``.

    With ``refine`` (default :data:`REFINE_SUP`) the samples come from the
    2x zero-padded grid, which contains the original lattice.
    """
    refine = REFINE_SUP if refine is None else refine
    sq = _upsampled_sq_magnitude(f) if refine else _sq_magnitude(f)
    return float(np.sqrt(np.max(sq)))


def lp_norm(f: SpectralField, p: float, refine: bool | None = None) -> float:
    """Lattice-quadrature ``L^p`` norm of ``|u|`` over the box; ``p = inf`` is the sup norm."""
    if p < 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    if math.isinf(p):
        return sup_norm(f, refine)
    if p == 2:
        return l2_norm(f)
    mag = np.sqrt(_sq_magnitude(f))
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))


def l2_norm(f: SpectralField) -> float:
    """``L^2`` norm via Parseval (identical to lattice quadrature)."""
    c = f.coeffs
    return float(np.sqrt(np.sum(c.real**2 + c.imag**2) * f.grid.volume))


def energy(f: SpectralField) -> float:
    """Kinetic energy ``||u||_2^2 / 2``."""
    return 0.5 * l2_norm(f) ** 2


def dissipation_rate(f: SpectralField) -> float:
    """``||grad u||_2^2``."""
    c = f.coeffs
    return float(np.sum((c.real**2 + c.imag**2) * f.grid.xi_sq) * f.grid.volume)


def wiener_norm(c: np.ndarray) -> float:
    """``sum_k |u_hat(k)|`` summed over components; bounds the sup norm from above."""
    return float(np.sum(np.abs(c)))


def divergence_residual(f: SpectralField) -> float:
    """``max_xi |xi . u_hat(xi)|`` (Nyquist components excluded, see :attr:`Grid.xi_deriv`)."""
    return float(np.max(np.abs(np.sum(f.grid.xi_deriv * f.coeffs, axis=0)), initial=0.0))


# --------------------------------------------------------------------------
# symmetries of the lattice


def translate(f: SpectralField, a) -> SpectralField:
    """``u(. - a)``; exact for any shift, lattice-preserving when ``a`` is a multiple of the spacing."""
    a = np.asarray(a, float).reshape((f.grid.d,) + (1,) * f.grid.d)
    phase = np.exp(-1j * np.sum(f.grid.xi * a, axis=0))
    return symmetrize(f.like(f.coeffs * phase))


def rescale(f: SpectralField, lam: float) -> SpectralField:
    """The NS rescaling ``lam * u(lam x)`` on the box of scale ``Lambda / lam``.

    Coefficient arrays are unchanged apart from the amplitude factor, so every
    lattice quadrature transforms exactly.
    """
    g = f.grid.with_scale(f.grid.box_scale / lam)
    return SpectralField(g, f.coeffs * lam, f.real)


# --------------------------------------------------------------------------
# half-space support statistics


def _xi1_mass_profile(c: np.ndarray, g: Grid):
    """Spectral l2 mass per lattice value of xi_1 (summed over everything else)."""
    c = np.asarray(c)
    mass = np.abs(c) ** 2
    other = tuple(range(mass.ndim - g.d + 1, mass.ndim)) + tuple(range(mass.ndim - g.d))
    per_k = np.sum(mass, axis=other) if other else mass
    order = np.argsort(g.k1d)
    return g.k1d[order] / g.box_scale, per_k[order]


def support_threshold(c, g: Grid, tol: float = 1e-8) -> float:
    """Largest ``rho`` with at least ``1 - tol`` of the l2 mass in ``{xi_1 >= rho}``.

    ``c`` may carry leading batch axes (components, times); all are pooled.
    Returns ``inf`` for a zero array.
    """
    xi1, m = _xi1_mass_profile(c, g)
    total = m.sum()
    if total == 0:
        return math.inf
    tail = np.cumsum(m[::-1])[::-1]  # mass in {xi_1 >= xi1[i]}
    ok = np.nonzero(tail >= (1 - tol) * total)[0]
    return float(xi1[ok[-1]])


def mass_outside_halfspace(c, g: Grid, rho: float) -> float:
    """Fraction of the l2 mass with ``xi_1 < rho``; 0 for a zero array."""
    xi1, m = _xi1_mass_profile(c, g)
    total = m.sum()
    if total == 0:
        return 0.0
    return float(m[xi1 < rho - 1e-12].sum() / total)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Time-ordered samples ``(t, u(t))`` with per-step records.

    Between stored times the field is interpolated linearly in spectral
    coefficients (``interp="linear"``) or, with ``interp="heat"``, as the heat
    flow of the left sample plus a linear ramp of the Duhamel increment, which
    is exact for solutions of the heat equation.
    """

    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    records: list = field(default_factory=list)
    interp: str = "linear"
    meta: dict = field(default_factory=dict)

    def append(self, t: float, u: SpectralField, **record):
        if not self.times:
            if t != 0:
                raise IntervalError("a trajectory must start at t = 0")
        elif t <= self.times[-1]:
            raise IntervalError("trajectory times must be strictly increasing")
        self.times.append(float(t))
        self.fields.append(u)
        record.setdefault("t", float(t))
        self.records.append(record)

    @classmethod
    def constant(cls, u: SpectralField, T: float):
        tr = cls()
        tr.append(0.0, u)
        tr.append(T, u)
        return tr

    def __len__(self):
        return len(self.times)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def t_end(self) -> float:
        return self.times[-1]

    def covers(self, t: float) -> bool:
        return bool(self.times) and -1e-14 <= t <= self.times[-1] * (1 + 1e-14) + 1e-300

    def at(self, t: float, interp: str | None = None) -> SpectralField:
        """Field at time ``t`` by interpolation between stored samples."""
        if not self.covers(t):
            raise IntervalError(f"time {t} outside trajectory range [0, {self.t_end if self.times else 0}]")
        return self.fields[0].like(self.coeffs_at(t, interp))

    def coeffs_at(self, t: float, interp: str | None = None) -> np.ndarray:
        interp = interp or self.interp
        ts = self.times
        t = min(max(t, 0.0), ts[-1])
        i = int(np.searchsorted(ts, t, side="right")) - 1
        if i >= len(ts) - 1:
            return self.fields[-1].coeffs
        ta, tb = ts[i], ts[i + 1]
        a, b = self.fields[i].coeffs, self.fields[i + 1].coeffs
        th = (t - ta) / (tb - ta)
        if th == 0:
            return a
        if interp == "heat":
            g = self.fields[i].grid
            ea = np.exp(-(t - ta) * g.xi_sq)
            eb = np.exp(-(tb - ta) * g.xi_sq)
            return ea * a + th * (b - eb * a)
        return (1 - th) * a + th * b
