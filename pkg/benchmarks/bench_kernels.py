"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from pfm import _kernels
from pfm._kernels import fallback
from pfm.manifold_metrics import _codes, knn_graph


def cases(rng):
    x = rng.normal(size=(300, 3))
    g = knn_graph(x, 5)
    graph = (g.indptr.astype(np.int64), g.indices.astype(np.int64), g.weights.astype(np.float64))
    seqs = ["".join(rng.choice(list("ACDEFGHIKL"), size=rng.integers(5, 25))) for _ in range(150)]
    codes, off = _codes(seqs)
    pts = np.ascontiguousarray(rng.normal(size=(600, 2)))
    return {
        "dijkstra_all_pairs (n=300, k=5)": ("dijkstra_all_pairs", graph),
        "levenshtein_matrix (150 seqs)": ("levenshtein_matrix", (codes, off)),
        "nearest_other (n=600)": ("nearest_other", (pts,)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    print(f"{'kernel':36s} {'cython [s]':>11s} {'python [s]':>11s} {'speedup':>8s}")
    for label, (name, args_) in cases(np.random.default_rng(0)).items():
        fast = min(timeit.repeat(lambda: getattr(_kernels.compiled, name)(*args_), number=1, repeat=args.repeat))
        slow = min(timeit.repeat(lambda: getattr(fallback, name)(*args_), number=1, repeat=args.repeat))
        print(f"{label:36s} {fast:11.4f} {slow:11.4f} {slow / fast:7.1f}x")


if __name__ == "__main__":
    main()
