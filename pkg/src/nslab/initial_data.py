"""Initial-data generators.

Every generator returns a divergence-free :class:`SpectralField`.  Generators
are registered by name in :data:`GENERATORS` so scenario files can refer to
them, and :func:`build_initial_data` applies the optional post-operations.
"""

from __future__ import annotations

import math

import numpy as np

from .besov import phi
from .errors import ConfigError, ResolutionError
from .fieldio import load_field
from .spectral import (
    Grid,
    SpectralField,
    leray_project,
    rescale,
    sup_norm,
    symmetrize,
    to_spectral,
)

__all__ = [
    "taylor_green",
    "random_divfree",
    "half_space",
    "half_space_rho",
    "bump",
    "from_file",
    "GENERATORS",
    "build_initial_data",
]


def taylor_green(grid: Grid, amplitude: float = 1.0, freq: float = 1.0) -> SpectralField:
    """Taylor-Green vortex with wavenumber ``freq`` along every axis.

    2D: ``(sin x cos y, -cos x sin y)``; 3D: ``(sin x cos y cos z, -cos x sin y cos z, 0)``.
    """
    if abs(freq * grid.box_scale - round(freq * grid.box_scale)) > 1e-9:
        raise ResolutionError("Taylor-Green wavenumber is not on the lattice")
    X = freq * grid.x
    if grid.d == 2:
        u = [np.sin(X[0]) * np.cos(X[1]), -np.cos(X[0]) * np.sin(X[1])]
    else:
        cz = np.cos(X[2])
        u = [np.sin(X[0]) * np.cos(X[1]) * cz, -np.cos(X[0]) * np.sin(X[1]) * cz, np.zeros(grid.shape)]
    return leray_project(to_spectral(amplitude * np.stack(u), grid))


def random_divfree(grid: Grid, slope: float = -2.0, band=(1.0, 8.0), seed: int = 0,
                   amplitude: float = 1.0) -> SpectralField:
    """Gaussian random field with spectrum ``|xi|^slope`` on ``band[0] <= |xi| <= band[1]``.

    The field is projected, kept inside the dealias mask and scaled so that its
    sup norm equals ``amplitude``.
    """
    lo, hi = band
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((grid.d,) + grid.shape) + 1j * rng.standard_normal((grid.d,) + grid.shape)
    r = grid.xi_abs
    keep = (r >= lo) & (r <= hi) & grid.dealias_mask
    if not np.any(keep):
        raise ResolutionError(f"band {band} contains no dealiased lattice modes")
    w = np.zeros_like(r)
    w[keep] = r[keep] ** slope
    f = leray_project(symmetrize(SpectralField(grid, z * w)))
    s = sup_norm(f)
    return f * (amplitude / s) if s > 0 else f


def half_space_rho(L: int) -> float:
    """Half-space threshold ``2^(L-1)`` of :func:`half_space` data."""
    return 2.0 ** (L - 1)


def _tilde_phi(s: np.ndarray) -> np.ndarray:
    """One-sided annular profile: ``phi(|s|)`` for ``1/2 <= s <= 2``, zero otherwise (``s`` signed)."""
    return np.where((s >= 0.5) & (s <= 2.0), phi(np.abs(s)), 0.0)


def half_space(grid: Grid, L: int, c: float = 0.1) -> SpectralField:
    """Large data with spectrum in the positive orthant near ``|xi_i| ~ 2^L``.

    The Fourier transform on R^d of the first component is
    ``c 2^{L(1-d)} prod_i tilde_phi(2^-L xi_i)``, the second is ``-(xi_1/xi_2)``
    times the first and the rest vanish.  Lattice coefficients are the
    transform divided by the box volume.  The sup norm grows like ``2^L`` and
    every mode has ``xi_1 >= 2^(L-1)``.  The field is complex valued.

    Raises:
        ResolutionError: the support does not fit in the lattice.
    """
    d = grid.d
    top = 1.5 * 2.0**L * grid.box_scale
    if top >= grid.N // 2:
        raise ResolutionError(
            f"half_space(L={L}) needs lattice wavenumbers up to {top:g}; N={grid.N} gives {grid.N // 2 - 1}"
        )
    xi = grid.xi
    prof = np.ones(grid.shape)
    for i in range(d):
        prof = prof * _tilde_phi(2.0 ** (-L) * xi[i])
    u1 = c * 2.0 ** (L * (1 - d)) * prof / grid.volume
    coeffs = np.zeros((d,) + grid.shape, np.complex128)
    coeffs[0] = u1
    nz = prof > 0
    coeffs[1][nz] = -(xi[0][nz] / xi[1][nz]) * u1[nz]
    return SpectralField(grid, coeffs, real=False)


def bump(grid: Grid, amplitude: float = 1.0, width: float = 0.5, center=None) -> SpectralField:
    """Divergence-free bump: the curl of a Gaussian stream function.

    2D: ``(d_2 g, -d_1 g)``; 3D: ``grad g x (1, 1, 1)/sqrt(3)``, with
    ``g = exp(-|x - center|^2 / (2 width^2))`` (minimal-image distance), scaled
    to sup norm ``amplitude``.
    """
    if center is None:
        center = np.full(grid.d, grid.side / 2)
    c = np.asarray(center, float).reshape((grid.d,) + (1,) * grid.d)
    dx = (grid.x - c + grid.side / 2) % grid.side - grid.side / 2
    gauss = np.exp(-np.sum(dx**2, axis=0) / (2 * width**2))
    grad = -dx / width**2 * gauss
    if grid.d == 2:
        u = np.stack([grad[1], -grad[0]])
    else:
        a = np.ones(3) / math.sqrt(3)
        u = np.stack([grad[1] * a[2] - grad[2] * a[1], grad[2] * a[0] - grad[0] * a[2],
                      grad[0] * a[1] - grad[1] * a[0]])
    f = leray_project(to_spectral(u, grid))
    s = sup_norm(f)
    return f * (amplitude / s) if s > 0 else f


def from_file(grid: Grid | None, path: str) -> SpectralField:
    f = load_field(path)
    if grid is not None and f.grid != grid:
        raise ConfigError(f"field file grid {f.grid} differs from scenario grid {grid}", "initial_data.path")
    return f


GENERATORS = {
    "taylor_green": taylor_green,
    "random_divfree": random_divfree,
    "half_space": half_space,
    "bump": bump,
    "file": from_file,
}


def build_initial_data(grid: Grid, spec: dict) -> SpectralField:
    """Build a field from ``{"generator": name, "params": {...}, "post": [...]}``.

    Post-operations are ``"leray_project"`` or ``{"rescale": lam}``; a rescale
    changes the grid's box scale (see :func:`nslab.spectral.rescale`).
    """
    name = spec.get("generator")
    if name not in GENERATORS:
        raise ConfigError(f"unknown generator {name!r}", "initial_data.generator")
    params = dict(spec.get("params", {}))
    if "band" in params:
        params["band"] = tuple(params["band"])
    try:
        f = GENERATORS[name](grid, **params)
    except TypeError as exc:
        raise ConfigError(str(exc), "initial_data.params") from exc
    for i, op in enumerate(spec.get("post", [])):
        if op == "leray_project":
            f = leray_project(f)
        elif isinstance(op, dict) and "rescale" in op:
            f = rescale(f, float(op["rescale"]))
        else:
            raise ConfigError(f"unknown post-operation {op!r}", f"initial_data.post[{i}]")
    return f

