"""Trained 1-D discriminators against the 2 JS - log 4 ceiling.

    python3 scripts/variational_bound.py --n 10
"""

import argparse

from advspss.experiments import default_histograms, variational_gap


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10)
    args = ap.parse_args()
    p, q = default_histograms()
    print("seed,estimate,bound,slack")
    for seed in range(args.n):
        est, bound = variational_gap(seed, p, q)
        print(f"{seed},{est:.4f},{bound:.4f},{est - bound:+.4f}")


if __name__ == "__main__":
    main()
