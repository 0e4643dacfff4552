import os
import subprocess
import sys

import numpy as np
import pytest

from pfm import _kernels
from pfm._kernels import fallback
from pfm.manifold_metrics import _codes, knn_graph

compiled = _kernels.compiled
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")


def test_env_forces_fallback():
    code = "from pfm import _kernels; print(_kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={**os.environ, "PFM_PURE_PYTHON": "1"}, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("seed", range(3))
def test_dijkstra_parity(seed):
    x = np.random.default_rng(seed).normal(size=(60, 2))
    g = knn_graph(x, 4)
    args = (g.indptr.astype(np.int64), g.indices.astype(np.int64), g.weights.astype(np.float64))
    d1, p1 = compiled.dijkstra_all_pairs(*args)
    d2, p2 = fallback.dijkstra_all_pairs(*args)
    np.testing.assert_array_equal(d1, d2)
    np.testing.assert_array_equal(p1, p2)


@needs_compiled
def test_levenshtein_parity():
    rng = np.random.default_rng(0)
    seqs = ["".join(rng.choice(list("ACDEK"), size=rng.integers(0, 15))) for _ in range(40)]
    codes, off = _codes(seqs)
    np.testing.assert_array_equal(compiled.levenshtein_matrix(codes, off), fallback.levenshtein_matrix(codes, off))


@needs_compiled
def test_nearest_other_parity_with_ties():
    rng = np.random.default_rng(1)
    pts = np.ascontiguousarray(np.round(rng.normal(size=(80, 2)), 1))
    pts[10] = pts[20] = pts[30]
    np.testing.assert_array_equal(compiled.nearest_other(pts), fallback.nearest_other(pts))
    assert compiled.nearest_other(pts)[30] == 10
