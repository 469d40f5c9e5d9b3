"""Time the exact solver against scipy's dense assignment on random instances.

    python3 scripts/solver_benchmark.py --dim 3 --sizes 500 1000 2000
"""
import argparse
import time

from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from mbmatch.matching import solve_exact
from mbmatch.sampling import Fixed, SampleSpec, sample_pair


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000, 4000])
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    solve_exact(*sample_pair(SampleSpec(a.dim, Fixed(50), 0), SampleSpec(a.dim, Fixed(50), 1)))
    for n in a.sizes:
        x, y = sample_pair(SampleSpec(a.dim, Fixed(n), a.seed), SampleSpec(a.dim, Fixed(n), a.seed))
        t0 = time.perf_counter()
        m = solve_exact(x, y)
        t1 = time.perf_counter()
        c = cdist(x.points, y.points)
        r, k = linear_sum_assignment(c)
        t2 = time.perf_counter()
        ref = c[r, k].sum()
        print(f"N={n:6d} ours {t1 - t0:7.3f}s  scipy {t2 - t1:7.3f}s  "
              f"rel.diff {abs(m.total_length - ref) / ref:.1e}  route {m.stats.get('method')}")


if __name__ == "__main__":
    main()
