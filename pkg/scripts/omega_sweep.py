"""Generation loss and spoofing rate against omega_d, plus GV per dimension.

    python3 scripts/omega_sweep.py --seed 0 [--omegas 0,0.2,1]
"""

import argparse
import time

import numpy as np

from advspss.experiments import OMEGA_GRID, omega_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--omegas", default=",".join(str(w) for w in OMEGA_GRID))
    args = ap.parse_args()
    omegas = [float(w) for w in args.omegas.split(",")]

    t = time.perf_counter()
    s = omega_sweep(args.seed, omegas)
    print("omega_d,l_mge,spoofing_rate")
    for w in omegas:
        print(f"{w:g},{s.table[w]['l_mge']:.4f},{s.table[w]['spoofing_rate']:.4f}")
    print()
    print("dim,natural," + ",".join(f"gv@{w:g}" for w in omegas))
    for d in range(s.gv_natural.size):
        print(f"{d},{s.gv_natural[d]:.4f}," + ",".join(f"{s.gv[w][d]:.4f}" for w in omegas))
    print(f"# {time.perf_counter() - t:.0f} s, mean |log GV ratio| per omega: "
          + ", ".join(f"{w:g}: {np.mean(np.abs(np.log(s.gv[w] / s.gv_natural))):.3f}" for w in omegas))


if __name__ == "__main__":
    main()
