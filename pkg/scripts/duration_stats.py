"""Mean and variance of natural vs generated durations, phoneme and unit level.

    python3 scripts/duration_stats.py --seed 0
"""

import argparse

from advspss.experiments import duration_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    stats = duration_comparison(args.seed)
    print("model,level,mean,variance")
    nat = stats["mse"]
    for level in ("phoneme", "isochrony"):
        print(f"natural,{level},{nat[level]['natural'][0]:.3f},{nat[level]['natural'][1]:.3f}")
    for model, st in stats.items():
        for level in ("phoneme", "isochrony"):
            m, v = st[level]["generated"]
            print(f"{model},{level},{m:.3f},{v:.3f}")


if __name__ == "__main__":
    main()
