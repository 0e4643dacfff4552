"""Pure-Python versions of the compiled kernels, same signatures and results."""

from __future__ import annotations

import heapq

import numpy as np


def dijkstra_all_pairs(indptr, indices, weights):
    n = len(indptr) - 1
    indptr = [int(i) for i in indptr]
    indices = [int(i) for i in indices]
    weights = [float(w) for w in weights]
    dist = np.full((n, n), np.inf)
    pred = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        d = [np.inf] * n
        p = [-1] * n
        done = [False] * n
        d[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            du, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                nd = du + weights[e]
                if nd < d[v] or (nd == d[v] and p[v] > u and not done[v]):
                    d[v] = nd
                    p[v] = u
                    heapq.heappush(heap, (nd, v))
        dist[src] = d
        pred[src] = p
    return dist, pred


def levenshtein(a, b):
    a, b = list(a), list(b)
    row = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        prev, row[0] = row[0], i
        for j in range(1, len(b) + 1):
            cur = row[j]
            row[j] = min(prev + (a[i - 1] != b[j - 1]), cur + 1, row[j - 1] + 1)
            prev = cur
    return row[-1]


def levenshtein_matrix(codes, offsets):
    n = len(offsets) - 1
    seqs = [list(codes[offsets[i] : offsets[i + 1]]) for i in range(n)]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = levenshtein(seqs[i], seqs[j])
    return out


def nearest_other(pts):
    pts = np.asarray(pts, dtype=np.float64)
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(sq, np.inf)
    return np.argmin(sq, axis=1).astype(np.int64)
