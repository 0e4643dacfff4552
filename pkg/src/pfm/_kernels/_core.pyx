# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: all-pairs Dijkstra, edit distance, 1-NN labels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef struct HeapItem:
    double key
    Py_ssize_t node


cdef inline bint _less(HeapItem a, HeapItem b) noexcept nogil:
    # ties broken by node index so the search order is deterministic
    return a.key < b.key or (a.key == b.key and a.node < b.node)


cdef void _push(HeapItem* heap, Py_ssize_t* size, HeapItem item) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(item, heap[parent]):
            heap[i] = heap[parent]
            i = parent
        else:
            break
    heap[i] = item


cdef HeapItem _pop(HeapItem* heap, Py_ssize_t* size) noexcept nogil:
    cdef HeapItem top = heap[0]
    cdef HeapItem last
    cdef Py_ssize_t i = 0, child, n
    size[0] -= 1
    n = size[0]
    if n == 0:
        return top
    last = heap[n]
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and _less(heap[child + 1], heap[child]):
            child += 1
        if _less(heap[child], last):
            heap[i] = heap[child]
            i = child
        else:
            break
    heap[i] = last
    return top


def dijkstra_all_pairs(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices, double[::1] weights):
    """Shortest-path lengths and predecessors from every source of a CSR graph."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t n_edges = indices.shape[0]
    dist_arr = np.full((n, n), np.inf)
    pred_arr = np.full((n, n), -1, dtype=np.int64)
    cdef double[:, ::1] dist = dist_arr
    cdef cnp.int64_t[:, ::1] pred = pred_arr
    cdef HeapItem* heap = <HeapItem*>malloc((n_edges + n + 1) * sizeof(HeapItem))
    if heap == NULL:
        raise MemoryError()
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] done = done_arr
    cdef Py_ssize_t src, u, v, e, size
    cdef double nd
    cdef HeapItem item
    with nogil:
        for src in range(n):
            for u in range(n):
                done[u] = 0
            size = 0
            dist[src, src] = 0.0
            item.key = 0.0
            item.node = src
            _push(heap, &size, item)
            while size > 0:
                item = _pop(heap, &size)
                u = item.node
                if done[u]:
                    continue
                done[u] = 1
                for e in range(indptr[u], indptr[u + 1]):
                    v = indices[e]
                    nd = dist[src, u] + weights[e]
                    if nd < dist[src, v] or (nd == dist[src, v] and pred[src, v] > u and not done[v]):
                        dist[src, v] = nd
                        pred[src, v] = u
                        item.key = nd
                        item.node = v
                        _push(heap, &size, item)
    free(heap)
    return dist_arr, pred_arr


cdef Py_ssize_t _edit(const cnp.int32_t[::1] a, const cnp.int32_t[::1] b, Py_ssize_t* row) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0]
    cdef Py_ssize_t i, j, prev, cur, best
    for j in range(n + 1):
        row[j] = j
    for i in range(1, m + 1):
        prev = row[0]
        row[0] = i
        for j in range(1, n + 1):
            cur = row[j]
            best = prev + (0 if a[i - 1] == b[j - 1] else 1)
            if cur + 1 < best:
                best = cur + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            prev = cur
    return row[n]


def levenshtein(cnp.int32_t[::1] a, cnp.int32_t[::1] b):
    row_arr = np.empty(b.shape[0] + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] row = row_arr
    return int(_edit(a, b, &row[0]))


def levenshtein_matrix(cnp.int32_t[::1] codes, cnp.int64_t[::1] offsets):
    """Pairwise edit distances between sequences packed as ``codes[offsets[i]:offsets[i+1]]``."""
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t i, j, longest = 0
    for i in range(n):
        if offsets[i + 1] - offsets[i] > longest:
            longest = offsets[i + 1] - offsets[i]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    row_arr = np.empty(longest + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] row = row_arr
    cdef double dv
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dv = <double>_edit(codes[offsets[i]:offsets[i + 1]], codes[offsets[j]:offsets[j + 1]], &row[0])
                out[i, j] = dv
                out[j, i] = dv
    return out_arr


def nearest_other(double[:, ::1] pts):
    """Index of each row's nearest other row (squared Euclidean, lowest index on ties)."""
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1]
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i, j, k, best_j
    cdef double best, acc, diff
    with nogil:
        for i in range(n):
            best = INFINITY
            best_j = -1
            for j in range(n):
                if j == i:
                    continue
                acc = 0.0
                for k in range(d):
                    diff = pts[i, k] - pts[j, k]
                    acc = acc + diff * diff
                if acc < best:
                    best = acc
                    best_j = j
            out[i] = best_j
    return out_arr
