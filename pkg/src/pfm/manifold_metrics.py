"""Data-manifold distances: Isomap geodesics and a composite sequence metric."""

from __future__ import annotations

import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)


class GraphDisconnectedError(ValueError):
    def __init__(self, components: list[list[int]]):
        self.components = components
        sizes = sorted((len(c) for c in components), reverse=True)
        preview = "; ".join(
            f"component {i}: {len(c)} nodes, first {c[:5]}" for i, c in enumerate(components[:4])
        )
        super().__init__(
            f"k-NN graph has {len(components)} connected components (sizes {sizes}): {preview}. "
            "Increase k so every point is reachable."
        )


@dataclass
class KnnGraph:
    """Symmetrised k-NN graph in CSR form, Euclidean edge weights."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    k: int

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edges(self) -> set[tuple[int, int]]:
        return {(i, int(j)) for i in range(self.n) for j in self.neighbors(i) if i < j}


@dataclass
class DistanceMatrix:
    values: np.ndarray
    provenance: str = "custom"
    meta: dict = field(default_factory=dict)
    predecessors: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"distance matrix must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(v < 0) or np.any(np.diag(v) != 0):
            raise ValueError("distance matrix needs non-negative entries and a zero diagonal")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix is not symmetric")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def restrict(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return self.values[np.ix_(idx, idx)]

    def path(self, i: int, j: int) -> list[int]:
        """Node sequence of the shortest path from ``i`` to ``j``."""
        if self.predecessors is None:
            raise ValueError("no predecessor information; build with graph_geodesics")
        out = [j]
        while out[-1] != i:
            p = int(self.predecessors[i, out[-1]])
            if p < 0:
                raise ValueError(f"no path from {i} to {j}")
            out.append(p)
        return out[::-1]

    def save(self, path) -> None:
        """Binary file (uint64 n, then float64 strict lower triangle, row-major) plus a JSON sidecar."""
        path = Path(path)
        n = self.n
        tri = self.values[np.tril_indices(n, -1)]
        _replace_atomic(path, np.array(n, dtype="<u8").tobytes() + tri.astype("<f8").tobytes())
        sidecar = {"format": "pfm-distance-matrix-v1", "n": n, "provenance": self.provenance, **self.meta}
        if self.predecessors is not None:
            pred_path = path.with_suffix(path.suffix + ".pred.npy")
            buf = io.BytesIO()
            np.save(buf, self.predecessors)
            _replace_atomic(pred_path, buf.getvalue())
            sidecar["predecessors"] = pred_path.name
        _replace_atomic(path.with_suffix(path.suffix + ".json"), json.dumps(sidecar, indent=2, sort_keys=True).encode())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        path = Path(path)
        raw = path.read_bytes()
        n = int(np.frombuffer(raw[:8], dtype="<u8")[0])
        tri = np.frombuffer(raw[8:], dtype="<f8")
        if tri.size != n * (n - 1) // 2:
            raise ValueError(f"{path}: expected {n * (n - 1) // 2} entries, found {tri.size}")
        vals = np.zeros((n, n))
        vals[np.tril_indices(n, -1)] = tri
        vals = vals + vals.T
        sidecar_path = path.with_suffix(path.suffix + ".json")
        meta = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
        provenance = meta.pop("provenance", "file")
        pred = None
        if "predecessors" in meta:
            pred = np.load(path.parent / meta.pop("predecessors"))
        meta.pop("format", None)
        meta.pop("n", None)
        return cls(vals, provenance, meta, pred)


def _replace_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# --- Isomap geodesics ------------------------------------------------------


def knn_graph(points, k: int) -> KnnGraph:
    """Symmetrised k-NN graph; among equidistant candidates the lower index wins."""
    x = np.asarray(getattr(points, "x", points), dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    adj = np.zeros((n, n), dtype=bool)
    adj[np.repeat(np.arange(n), k), order.ravel()] = True
    adj |= adj.T
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(adj.sum(axis=1))
    rows, cols = np.nonzero(adj)
    return KnnGraph(indptr, cols.astype(np.int64), dist[rows, cols].astype(np.float64), k)


def _components(graph: KnnGraph) -> list[list[int]]:
    seen = np.zeros(graph.n, dtype=bool)
    comps = []
    for s in range(graph.n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in graph.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def graph_geodesics(graph: KnnGraph) -> DistanceMatrix:
    """All-pairs shortest paths (Dijkstra from every node)."""
    comps = _components(graph)
    if len(comps) > 1:
        raise GraphDisconnectedError(comps)
    dist, pred = _kernels.dijkstra_all_pairs(
        np.ascontiguousarray(graph.indptr, dtype=np.int64),
        np.ascontiguousarray(graph.indices, dtype=np.int64),
        np.ascontiguousarray(graph.weights, dtype=np.float64),
    )
    # both triangles come from independent searches; symmetrise rounding
    dist = np.minimum(dist, dist.T)
    return DistanceMatrix(dist, "isomap", {"k": graph.k}, pred)


def isomap_distances(points, k: int) -> DistanceMatrix:
    return graph_geodesics(knn_graph(points, k))


# --- sequence metric -------------------------------------------------------


def _codes(seqs: Sequence) -> tuple[np.ndarray, np.ndarray]:
    table: dict = {}
    flat = []
    offsets = [0]
    for s in seqs:
        for ch in s:
            flat.append(table.setdefault(ch, len(table)))
        offsets.append(len(flat))
    return np.asarray(flat, dtype=np.int32), np.asarray(offsets, dtype=np.int64)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance (insertions, deletions, substitutions)."""
    codes, off = _codes([a, b])
    return int(_kernels._levenshtein(codes[off[0] : off[1]], codes[off[1] : off[2]]))


def levenshtein_matrix(seqs: Sequence) -> np.ndarray:
    codes, off = _codes(seqs)
    return _kernels.levenshtein_matrix(codes, off)


def _default_tables() -> dict:
    return json.loads(resources.files("pfm").joinpath("data/properties.json").read_text())


@dataclass
class PropertyEvaluator:
    """Scalar peptide property.

    ``kind`` is one of ``table-mean``, ``hydrophobic-moment``,
    ``net-charge`` or ``isoelectric-point``. ``table`` maps residues to a
    scale (hydrophobicity kinds); ``pka`` holds terminal and side-chain pKa
    values (charge kinds).
    """

    kind: str
    table: dict = field(default_factory=dict)
    pka: dict = field(default_factory=dict)
    angle_deg: float = 100.0
    ph: float = 7.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("table-mean", "hydrophobic-moment", "net-charge", "isoelectric-point"):
            raise ValueError(f"unknown property kind {self.kind!r}")
        if not self.name:
            self.name = self.kind

    def _check(self, seq):
        if self.kind in ("table-mean", "hydrophobic-moment"):
            known = self.table
        else:
            known = _default_tables()["alphabet"] if not self.table else self.table
        bad = sorted({ch for ch in seq if ch not in known})
        if bad:
            raise ValueError(f"unknown residue(s) {bad} in sequence {seq!r}")

    def __call__(self, seq: str) -> float:
        self._check(seq)
        if self.kind == "table-mean":
            return float(np.mean([self.table[ch] for ch in seq])) if seq else 0.0
        if self.kind == "hydrophobic-moment":
            delta = math.radians(self.angle_deg)
            acc = sum(self.table[ch] * complex(math.cos(i * delta), math.sin(i * delta)) for i, ch in enumerate(seq))
            return abs(acc)
        if self.kind == "net-charge":
            return net_charge(seq, self.pka, self.ph)
        return isoelectric_point(seq, self.pka)


def net_charge(seq: str, pka: dict, ph: float) -> float:
    """Henderson-Hasselbalch net charge of a peptide with free termini."""
    if not seq:
        return 0.0
    pos = 1.0 / (1.0 + 10.0 ** (ph - pka["n_term"]))
    neg = -1.0 / (1.0 + 10.0 ** (pka["c_term"] - ph))
    for ch in seq:
        if ch in pka["positive"]:
            pos += 1.0 / (1.0 + 10.0 ** (ph - pka["positive"][ch]))
        elif ch in pka["negative"]:
            neg -= 1.0 / (1.0 + 10.0 ** (pka["negative"][ch] - ph))
    return pos + neg


def isoelectric_point(seq: str, pka: dict, tol: float = 1e-4) -> float:
    """pH in [0, 14] where the net charge vanishes, by bisection."""
    if not seq:
        return 7.0
    lo, hi = 0.0, 14.0
    if net_charge(seq, pka, lo) <= 0:
        return lo
    if net_charge(seq, pka, hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if net_charge(seq, pka, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_evaluators(tables: dict | None = None) -> list[PropertyEvaluator]:
    """Hydrophobicity, hydrophobic moment, net charge and isoelectric point."""
    t = tables or _default_tables()
    h, pka = t["hydrophobicity"], t["pka"]
    angle = t.get("hydrophobic_moment_angle_deg", 100.0)
    ph = t.get("charge_ph", 7.0)
    return [
        PropertyEvaluator("table-mean", h, name="hydrophobicity"),
        PropertyEvaluator("hydrophobic-moment", h, angle_deg=angle, name="hydrophobic_moment"),
        PropertyEvaluator("net-charge", h, pka, ph=ph, name="charge"),
        PropertyEvaluator("isoelectric-point", h, pka, name="isoelectric_point"),
    ]


def property_distance(ev: PropertyEvaluator, a: str, b: str) -> float:
    return abs(ev(a) - ev(b))


LEVENSHTEIN = "levenshtein"


def fit_normalizers(evaluators: Sequence[PropertyEvaluator], train: Sequence[str]) -> dict[str, float]:
    """Largest distance per term over all training pairs; constant terms are dropped with a warning."""
    out = {}
    lev = levenshtein_matrix(train).max() if len(train) > 1 else 0.0
    terms = [(LEVENSHTEIN, float(lev))]
    for ev in evaluators:
        vals = np.array([ev(s) for s in train])
        terms.append((ev.name, float(vals.max() - vals.min()) if len(vals) else 0.0))
    for name, mx in terms:
        if mx > 0:
            out[name] = mx
        else:
            log.warning("metric term %r is constant on the training set; skipped", name)
    return out


def composite_sequence_distance(evaluators, normalizers: dict, a: str, b: str) -> float:
    total = 0.0
    if LEVENSHTEIN in normalizers:
        total += levenshtein(a, b) / normalizers[LEVENSHTEIN]
    for ev in evaluators:
        if ev.name in normalizers:
            total += property_distance(ev, a, b) / normalizers[ev.name]
    return total


def composite_distance_matrix(evaluators, normalizers: dict, seqs: Sequence[str]) -> DistanceMatrix:
    """Vectorised :func:`composite_sequence_distance` over all pairs."""
    n = len(seqs)
    out = np.zeros((n, n))
    if LEVENSHTEIN in normalizers:
        out += levenshtein_matrix(seqs) / normalizers[LEVENSHTEIN]
    for ev in evaluators:
        if ev.name in normalizers:
            v = np.array([ev(s) for s in seqs])
            out += np.abs(v[:, None] - v[None, :]) / normalizers[ev.name]
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    return DistanceMatrix(out, "custom", {"terms": sorted(normalizers), "normalizers": normalizers})
