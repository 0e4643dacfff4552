"""Interpolation error against graph geodesics, two-sample tests and analogue generation."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import kolmogorov

from . import _kernels
from .datasets import PointCloud, SequenceCodec, decode_sequences
from .diffeo import DiffeoModel, phi, phi_inverse
from .geometry import pullback_geodesic
from .manifold_metrics import DistanceMatrix, default_evaluators

log = logging.getLogger(__name__)

METHODS = ("linear", "latent", "submanifold")


@dataclass
class InterpolationReport:
    method: str
    per_pair: np.ndarray
    pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_pair))

    @property
    def std(self) -> float:
        return float(np.std(self.per_pair))

    def to_dict(self) -> dict:
        return {"method": self.method, "mean": self.mean, "std": self.std, "n_pairs": len(self.per_pair)}


def summarize_seeds(reports) -> dict:
    """Mean and standard deviation of per-seed mean RMSE."""
    means = np.array([r.mean for r in reports])
    return {"method": reports[0].method, "mean": float(means.mean()), "std": float(means.std()), "seeds": len(means)}


def longest_pairs(d: np.ndarray, subset, n_pairs: int) -> list[tuple[int, int]]:
    subset = np.asarray(subset)
    iu, ju = np.triu_indices(len(subset), 1)
    vals = d[subset[iu], subset[ju]]
    if len(vals) < n_pairs:
        log.warning("only %d pairs available, fewer than the requested %d", len(vals), n_pairs)
    order = np.argsort(-vals, kind="stable")[:n_pairs]
    return [(int(subset[iu[k]]), int(subset[ju[k]])) for k in order]


def _path_fractions(x, path):
    seg = np.linalg.norm(np.diff(x[path], axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return cum / cum[-1] if cum[-1] > 0 else np.linspace(0.0, 1.0, len(path))


def interpolation_rmse(
    model: DiffeoModel | None,
    data,
    d_matrix: DistanceMatrix,
    method: str = "linear",
    n_pairs: int = 100,
    subset=None,
) -> InterpolationReport:
    """RMSE between an interpolating curve and the graph shortest path, for the longest pairs.

    Each curve is evaluated at the arc-length fractions of the path vertices;
    the error is the root mean squared per-coordinate deviation over all
    vertices of the path. ``subset`` restricts pair endpoints (the test split).
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method != "linear" and model is None:
        raise ValueError(f"method {method!r} needs a model")
    x = np.asarray(getattr(data, "x", data), dtype=np.float64)
    subset = np.arange(len(x)) if subset is None else np.asarray(subset)
    pairs = longest_pairs(d_matrix.values, subset, n_pairs)
    out = np.empty(len(pairs))
    for k, (i, j) in enumerate(pairs):
        path = d_matrix.path(i, j)
        s = _path_fractions(x, path)
        if method == "linear":
            curve = (1.0 - s)[:, None] * x[i] + s[:, None] * x[j]
        else:
            curve = pullback_geodesic(model, x[i], x[j], s, space=method)
        out[k] = np.sqrt(np.mean((curve - x[path]) ** 2))
    return InterpolationReport(method, out, pairs)


def one_nn_accuracy(generated, reference) -> float:
    """Leave-one-out 1-NN two-sample accuracy over the union of both sets."""
    a = np.asarray(getattr(generated, "x", generated), dtype=np.float64)
    b = np.asarray(getattr(reference, "x", reference), dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both point sets must be nonempty")
    pts = np.ascontiguousarray(np.concatenate([a, b]))
    labels = np.r_[np.zeros(len(a), dtype=int), np.ones(len(b), dtype=int)]
    nn = _kernels.nearest_other(pts)
    return float(np.mean(labels[nn] == labels))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    d = float(np.max(np.abs(fa - fb)))
    n_eff = len(a) * len(b) / (len(a) + len(b))
    return d, float(min(1.0, kolmogorov(np.sqrt(n_eff) * d)))


# --- analogues -------------------------------------------------------------------


def latent_std(diffeo: DiffeoModel, train) -> np.ndarray:
    return phi(diffeo, np.asarray(getattr(train, "x", train), dtype=np.float64)).std(axis=0)


def analogue_generate(
    diffeo: DiffeoModel,
    base_points,
    tau: float,
    rng: np.random.Generator,
    sigma_z: np.ndarray,
    codec: SequenceCodec | None = None,
):
    """Perturb latent codes by ``tau * sigma_z * N(0, I)`` and map back.

    Returns a point cloud, or ``(points, sequences)`` when a codec is given.
    """
    x = np.asarray(getattr(base_points, "x", base_points), dtype=np.float64)
    z = phi(diffeo, x)
    z_new = z + tau * rng.standard_normal(z.shape) * np.asarray(sigma_z, dtype=np.float64)
    pts = PointCloud(phi_inverse(diffeo, z_new))
    if codec is None:
        return pts
    return pts, decode_sequences(codec, pts)


def _sequence_properties(evaluators):
    props = [("length", lambda s: float(len(s)))]
    props += [(ev.name, ev) for ev in evaluators]
    return props


@dataclass
class AnalogueReport:
    tau: float
    total: int
    in_data: int
    novel: int
    ks: dict = field(default_factory=dict)
    alpha: float = 0.05

    @property
    def n_tests(self) -> int:
        return len(self.ks)

    @property
    def non_significant(self) -> int:
        return sum(1 for v in self.ks.values() if v["p_value"] >= self.alpha)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["non_significant"] = f"{self.non_significant}/{self.n_tests}"
        return d


def analogue_report(tau, base_seqs, analogue_seqs, dataset_seqs, evaluators=None, alpha: float = 0.05) -> AnalogueReport:
    """Novelty counts and per-property KS tests of novel analogues against their base sequences.

    The five properties are sequence length (the edit-distance component)
    and the four physico-chemical terms.
    """
    known = set(dataset_seqs)
    novel_idx = [k for k, s in enumerate(analogue_seqs) if s not in known]
    rep = AnalogueReport(float(tau), len(analogue_seqs), len(analogue_seqs) - len(novel_idx), len(novel_idx), alpha=alpha)
    if not novel_idx:
        return rep
    evs = default_evaluators() if evaluators is None else evaluators
    for name, fn in _sequence_properties(evs):
        a = [fn(analogue_seqs[k]) for k in novel_idx]
        b = [fn(base_seqs[k]) for k in novel_idx]
        stat, p = ks_two_sample(a, b)
        rep.ks[name] = {"statistic": stat, "p_value": p}
    return rep


# --- report files ----------------------------------------------------------------


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def write_table_csv(path, rows: list[dict]) -> None:
    if not rows:
        open(path, "w").close()
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
