"""Fit the scaling constant for several dimensions and print a table.

    python3 scripts/beta_table.py --dims 3 4 --trials 100
"""
import argparse

from mbmatch.scaling import beta_scan, talagrand_scale


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", type=int, nargs="+", default=[3, 4, 5, 6])
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400, 800, 1600, 3200])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    print(f"{'d':>3} {'beta_hat':>10} {'ci95':>9} {'c':>8} {'drop1':>8} {'scale':>8} {'ratio':>7}")
    for d in a.dims:
        est = beta_scan(d, a.sizes, a.trials, a.seed, workers=a.workers)
        s = talagrand_scale(d)
        print(f"{d:3d} {est.beta_hat:10.5f} {est.beta_ci:9.5f} {est.correction:8.3f} "
              f"{est.sensitivity:8.4f} {s:8.4f} {est.beta_hat / s:7.3f}")
        print("    ratios:", " ".join(f"{r:.4f}" for r in est.stabilization))


if __name__ == "__main__":
    main()
