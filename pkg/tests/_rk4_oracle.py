"""Independent integrating-factor RK4 reference for the velocity equation.

Written directly against ``numpy``/``scipy.fft`` with its own wavenumbers,
dealiasing mask and projector, so it shares no code with the package.  It
steps the differential form

    d/dt v = -|xi|^2 v - P (i xi . (u u)^)

in the variable ``exp(t |xi|^2) v`` with classical RK4.
"""

import numpy as np
import scipy.fft as sfft


def if_rk4(c0: np.ndarray, box_scale: float, T: float, dt: float) -> np.ndarray:
    """Advance Fourier coefficients ``c0`` (package layout, full lattice) to ``T``.

    Returns half-spectrum coefficients in the package normalization
    (``fftn / N^d``), last axis of length ``N // 2 + 1``.
    """
    d, N = c0.shape[0], c0.shape[1]
    k1 = np.fft.fftfreq(N, 1.0 / N)
    kr = np.fft.rfftfreq(N, 1.0 / N)
    ks = np.stack(np.meshgrid(*([k1] * (d - 1) + [kr]), indexing="ij"))
    xi = ks / box_scale
    k2 = np.sum(xi**2, 0)
    mask = np.all(np.abs(ks) <= N // 3, axis=0)  # two-thirds rule
    inv = np.where(k2 > 0, 1 / np.where(k2 > 0, k2, 1), 0)
    shape = (N,) * d
    ax = tuple(range(1, d + 1))
    iu = np.triu_indices(d)
    pair = {}
    for n, (i, j) in enumerate(zip(*iu)):
        pair[i, j] = pair[j, i] = n
    ixm = 1j * xi * mask

    def nonlinear(v):
        u = sfft.irfftn(v, s=shape, axes=ax)
        P = sfft.rfftn(u[iu[0]] * u[iu[1]], axes=ax)
        a = np.stack([sum(ixm[j] * P[pair[i, j]] for j in range(d)) for i in range(d)])
        return a - xi * (np.sum(xi * a, 0) * inv)

    v = c0[..., : N // 2 + 1] * N**d
    E = np.exp(-dt * k2)
    E2 = np.exp(-dt / 2 * k2)
    h2 = dt / 2
    for _ in range(int(round(T / dt))):
        a = nonlinear(v)
        b = nonlinear(E2 * (v - h2 * a))
        c = nonlinear(E2 * v - h2 * b)
        e = nonlinear(E * v - dt * E2 * c)
        v = E * v - dt / 6 * (E * a + 2 * E2 * (b + c) + e)
    return v / N**d
