"""Blowup diagnostics on an injected self-similar family.

u(t) = (T-t)^{-1/2} V(x / sqrt(T-t)) is the profile of a type-I singularity.
It is not a solution; it calibrates the functionals.  The rate functional
sqrt(T-t) ||u||_inf and the type-I functional (T-t) ||u||_p^{sigma_p} are
constant along it, concentration times are selected where the sup norm has
grown by the required factor, and the concentration point is the bump center.
"""

import numpy as np

from nslab.blowup import (
    locate_concentration,
    omega_trace,
    rate_functional,
    select_concentration_times,
    self_similar_family,
    typeI_functional,
)
from nslab.spectral import Grid, sup_norm


def main():
    g = Grid(3, 32)
    tr = self_similar_family(g, 1.0, np.linspace(0, 0.5, 6), width=0.7)
    rate = rate_functional(tr, 1.0)
    typeI = typeI_functional(tr, 1.0, 6.0)
    print("     t    rate      type-I (p=6)")
    for (t, r), (_, q) in zip(rate.rows(), typeI.rows()):
        print(f"{t:6.2f}  {r:8.5f}  {q:10.5f}")

    times = 1 - 4.0 ** -np.arange(0, 12)
    om = omega_trace(self_similar_family(g, 1.0, times, width=0.7), refine=False)
    picks = select_concentration_times(om.t, om.value)
    print("selected concentration times:", [f"{om.t[i]:.8f}" for i in picks])

    f = tr.fields[0]
    pt = locate_concentration(f, sup_norm(f, refine=False), 6.0, M=32.0)
    print(f"concentration point {np.round(pt.x, 6)}, injected center {tr.meta['center']}")


if __name__ == "__main__":
    main()
