"""Half-line spectral table and whole-line S-matrix for a few potentials, printed as text."""
import numpy as np

from scatterlab.potential import make_bump, make_square_barrier
from scatterlab.spectral import build_table
from scatterlab.waveop import barrier_transmission, scattering_wholeline

E = np.linspace(0.5, 6.0, 12)

for p in (make_square_barrier(1, 0, 1), make_bump(1.0, 0, 2)):
    tab = build_table(p, np.sqrt(E))
    S = scattering_wholeline(p, np.sqrt(E))
    print(f"\n{p.kind} {p.params}")
    print(f"{'E':>6} {'Im m':>10} {'density':>10} {'|gamma|':>9} {'|t|^2':>9} {'abs defect':>10}")
    d = tab.absorption_defect()
    for k in range(E.size):
        print(f"{E[k]:6.2f} {tab.m[k].imag:10.5f} {tab.density[k]:10.5f} {abs(tab.gamma[k]):9.5f} "
              f"{abs(S.t1[k])**2:9.6f} {d[k]:10.1e}")
    print(f"unitarity {S.unitarity_defect().max():.1e}, t1-t2 {S.symmetry_defect().max():.1e}")
    if p.kind == "square_barrier":
        err = max(abs(abs(S.t1[k]) ** 2 - barrier_transmission(1, 1, e)) for k, e in enumerate(E) if e > 1)
        print(f"closed form |t|^2 error (E > 1): {err:.1e}")
