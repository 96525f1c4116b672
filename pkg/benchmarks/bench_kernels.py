"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py --sizes 15 100 500 --repeat 20

Per-image graphs are capped at 15 objects, so the first row is the one the
pipeline actually hits; larger sizes show where compilation starts to pay.
"""
import argparse
import timeit

import numpy as np

from arsic import _accel


def random_boxes(rng, n):
    xy = rng.uniform(0, 1000, size=(n, 2))
    wh = rng.uniform(1, 40, size=(n, 2))
    return np.hstack([xy, xy + wh])


def mst_inputs(boxes):
    n = len(boxes)
    dist = _accel.pairwise_box_distance_np(boxes)
    a, b = np.triu_indices(n, 1)
    order = np.lexsort((b, a, dist[a, b]))
    return n, a[order].astype(np.int64), b[order].astype(np.int64)


def bench(fn, repeat):
    fn()  # warm-up; also triggers JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--sizes", type=int, nargs="+", default=[15, 100, 500])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy kernels are available")
        return 1

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'n':>6}{'numpy (us)':>14}{'numba (us)':>14}{'speedup':>10}")
    for n in args.sizes:
        boxes = random_boxes(rng, n)
        size, a, b = mst_inputs(boxes)
        chosen = _accel.kruskal_select_np(size, a, b)
        ta, tb = a[chosen], b[chosen]
        cases = [
            ("pairwise_box_distance", lambda: _accel.pairwise_box_distance_np(boxes),
             lambda: _accel.pairwise_box_distance_nb(boxes)),
            ("kruskal_select", lambda: _accel.kruskal_select_np(size, a, b),
             lambda: _accel.kruskal_select_nb(size, a, b)),
            ("component_labels", lambda: _accel.component_labels_np(size, ta, tb),
             lambda: _accel.component_labels_nb(size, ta, tb)),
        ]
        for name, slow, fast in cases:
            assert np.array_equal(np.asarray(slow()), np.asarray(fast())), name
            t_np, t_nb = bench(slow, args.repeat), bench(fast, args.repeat)
            print(f"{name:<22}{n:>6}{t_np * 1e6:>14.1f}{t_nb * 1e6:>14.1f}{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
