"""Training-set generation and adversarial loss over a 100-iteration joint run.

    python3 scripts/convergence.py --seeds 0,1,2,3
"""

import argparse

from advspss.experiments import convergence_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--trace", action="store_true", help="print every iteration")
    args = ap.parse_args()
    print("seed,l_mge_first,l_mge_last,ratio_mge,l_adv_first,l_adv_last,ratio_adv")
    for seed in (int(s) for s in args.seeds.split(",")):
        hist = convergence_run(seed)
        if args.trace:
            for h in hist:
                print(f"# {seed},{h['iteration']},{h['l_mge']:.4f},{h['l_adv']:.4f}")
        a, b = hist[0], hist[-1]
        print(
            f"{seed},{a['l_mge']:.4f},{b['l_mge']:.4f},{b['l_mge'] / a['l_mge']:.3f},"
            f"{a['l_adv']:.4f},{b['l_adv']:.4f},{b['l_adv'] / a['l_adv']:.3f}"
        )


if __name__ == "__main__":
    main()
