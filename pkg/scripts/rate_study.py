"""Cauchy-increment decay for the modified experiment on V = c (1+x)^-alpha.

Fits the power law of dist_to_limit against t and prints the per-octave
increment ratio next to the 0.6 contract.  Takes ~10 s per alpha.

    python scripts/rate_study.py --alpha 0.6 0.8 --n 11
"""
import argparse

import numpy as np

from scatterlab.potential import make_power_decay, make_square_barrier
from scatterlab.waveop import geometric_schedule, waveop_experiment


def octave_ratios(r):
    t, inc = r.t, r.cauchy_increment
    out = []
    for T in t:
        if 4 * T > t[-1] * (1 + 1e-9):
            break
        ok, a, b = r.cauchy_contract(T)
        out.append((T, b / a, ok))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.6])
    ap.add_argument("--T0", type=float, default=12.5)
    ap.add_argument("--n", type=int, default=9)
    ap.add_argument("--band", type=float, nargs=2, default=(0.8, 1.2))
    ap.add_argument("--compact", action="store_true", help="also run the unmodified barrier for contrast")
    args = ap.parse_args()

    ts = geometric_schedule(args.T0, args.n)
    runs = [(f"power_decay alpha={a}", waveop_experiment(make_power_decay(1.0, a), args.band, ts, modified=True))
            for a in args.alpha]
    if args.compact:
        runs.append(("square_barrier", waveop_experiment(make_square_barrier(1, 0, 1), args.band, ts, modified=False)))

    for name, r in runs:
        print(f"\n{name}")
        print(f"{'t':>8} {'increment':>11} {'dist':>11}")
        for row in r.rows():
            print(f"{row[0]:8.2f} {row[1]:11.3e} {row[2]:11.3e}")
        d = r.dist_to_limit
        good = d > 0
        if good.sum() >= 3:
            # fit on the second half of the schedule
            k = good.nonzero()[0][good.sum() // 2:]
            slope = np.polyfit(np.log(r.t[k]), np.log(d[k]), 1)[0]
            print(f"dist ~ t^{slope:.3f}  (per-octave factor {2**slope:.3f})")
        for T, q, ok in octave_ratios(r):
            print(f"T={T:7.2f}  [2T,4T]/[T,2T] = {q:.3f}  {'ok' if ok else 'above 0.6'}")


if __name__ == "__main__":
    main()
