"""Sweep the coupling A of the Dirac embedded-eigenvalue construction at E = 1."""
import sys

import numpy as np

from scatterlab.dirac import design_embedded

X = float(sys.argv[1]) if len(sys.argv) > 1 else 400.0

print(f"{'A':>5} {'exponent':>9} {'left':>7} {'tail':>7} {'L2':>4} {'bound':>5} {'lock err':>9}")
for A in (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0):
    _, _, r = design_embedded(1.0, A, X=X)
    left = np.nan if r.exponent_left is None else r.exponent_left
    print(f"{A:5.2f} {r.exponent:9.4f} {left:7.3f} {r.tail_ratio:7.3f} {'y' if r.l2_convergent else 'n':>4} "
          f"{'y' if r.bound_ok else 'n':>5} {r.lock_error:9.1e}")
# decay ~ x^-A, so square integrability needs A > 1/2
