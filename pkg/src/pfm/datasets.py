"""Synthetic generators, file loaders, the sequence codec and train/test splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


@dataclass
class PointCloud:
    x: np.ndarray
    ids: list[str] | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        if not np.all(np.isfinite(self.x)):
            raise ValueError("point cloud has non-finite entries")
        if self.ids is not None and len(self.ids) != len(self.x):
            raise ValueError("ids and points differ in length")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, idx) -> "PointCloud":
        idx = np.asarray(idx)
        ids = [self.ids[i] for i in idx] if self.ids is not None else None
        return PointCloud(self.x[idx], ids)


@dataclass
class SequenceDataset:
    sequences: list[str]
    activity: np.ndarray | None = None
    ids: list[str] | None = None
    max_len: int = 25
    alphabet: str = AMINO_ACIDS

    def __post_init__(self):
        allowed = set(self.alphabet)
        for s in self.sequences:
            if len(s) > self.max_len:
                raise ValueError(f"sequence {s!r} longer than {self.max_len}")
            bad = set(s) - allowed
            if bad:
                raise ValueError(f"sequence {s!r} has residues outside the alphabet: {sorted(bad)}")

    def __len__(self):
        return len(self.sequences)

    def take(self, idx) -> "SequenceDataset":
        idx = list(np.asarray(idx))
        return SequenceDataset(
            [self.sequences[i] for i in idx],
            None if self.activity is None else self.activity[idx],
            None if self.ids is None else [self.ids[i] for i in idx],
            self.max_len,
            self.alphabet,
        )


# --- generators ------------------------------------------------------------


def arch_curve(u) -> np.ndarray:
    """Noise-free arch: u in [-1, 1] wrapped onto the upper unit half circle."""
    u = np.asarray(u, dtype=np.float64)
    return np.stack([np.sin(0.5 * np.pi * u), np.cos(0.5 * np.pi * u)], axis=-1)


def gen_arch(n: int, noise_sigma: float, rng: np.random.Generator) -> PointCloud:
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.uniform(-1.0, 1.0, size=n)
    y = arch_curve(u) + rng.normal(0.0, 1.0, size=(n, 2)) * noise_sigma
    return PointCloud(y)


# fixed rotation: 30 degrees about x, then 45 degrees about z
_c30, _s30 = math.cos(math.pi / 6), math.sin(math.pi / 6)
_c45, _s45 = math.cos(math.pi / 4), math.sin(math.pi / 4)
DEFAULT_ROTATION = np.array([[_c45, -_s45, 0.0], [_s45, _c45, 0.0], [0.0, 0.0, 1.0]]) @ np.array(
    [[1.0, 0.0, 0.0], [0.0, _c30, -_s30], [0.0, _s30, _c30]]
)


def swiss_roll_surface(t, h) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return np.stack([t * np.cos(t), h, t * np.sin(t)], axis=-1)


def gen_swiss_roll(
    n: int,
    noise_sigma: float,
    rotation: np.ndarray | None,
    rng: np.random.Generator,
    t_range: tuple[float, float] = (1.5 * np.pi, 4.5 * np.pi),
    height: float = 10.0,
    scale: float = 1.0,
) -> PointCloud:
    """Points ``scale * R (t cos t, h, t sin t) + noise`` with t, h uniform."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    t = rng.uniform(t_range[0], t_range[1], size=n)
    h = rng.uniform(0.0, height, size=n)
    p = swiss_roll_surface(t, h) @ rot.T * scale
    return PointCloud(p + rng.normal(0.0, 1.0, size=p.shape) * noise_sigma)


def gen_sequence_corpus(
    n: int,
    rng: np.random.Generator,
    alphabet: str = "AKLE",
    n_families: int = 12,
    min_len: int = 4,
    max_len: int = 10,
    mutation_rate: float = 0.15,
) -> SequenceDataset:
    """Families of related sequences: random parents, children by point mutation and indels."""
    parents = [
        "".join(rng.choice(list(alphabet), size=int(rng.integers(min_len, max_len + 1))))
        for _ in range(n_families)
    ]
    out = []
    for i in range(n):
        s = list(parents[i % n_families])
        for pos in range(len(s)):
            if rng.random() < mutation_rate:
                s[pos] = str(rng.choice(list(alphabet)))
        if rng.random() < mutation_rate and len(s) > min_len:
            del s[int(rng.integers(len(s)))]
        if rng.random() < mutation_rate and len(s) < max_len:
            s.insert(int(rng.integers(len(s) + 1)), str(rng.choice(list(alphabet))))
        out.append("".join(s))
    return SequenceDataset(out, max_len=max_len, alphabet=alphabet)


# --- splitting -------------------------------------------------------------


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction {fraction} outside (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(data, fraction: float, seed: int):
    """Seeded shuffle split into ``(train, test)``; works for point clouds and sequence sets."""
    n = data.n if isinstance(data, PointCloud) else len(data)
    tr, te = split_indices(n, fraction, seed)
    return data.take(tr), data.take(te)


# --- sequence codec --------------------------------------------------------


def positional_embedding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    rate = 1.0 / np.power(10000.0, (2 * (i // 2)) / dim)
    ang = pos * rate
    return np.where(i % 2 == 0, np.sin(ang), np.cos(ang))


@dataclass
class SequenceCodec:
    """Residue embedding table plus sine-cosine position offsets.

    Row 0 of ``table`` is the pad token and is all zeros; pad positions carry
    no positional offset, so the zero vector decodes to the empty sequence.
    """

    alphabet: str
    table: np.ndarray
    length: int

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return positional_embedding(self.length, self.dim)

    def min_row_gap(self) -> float:
        t = self.table
        d = np.sqrt(((t[:, None, :] - t[None, :, :]) ** 2).sum(axis=2))
        return float(d[~np.eye(len(t), dtype=bool)].min())


def make_codec(alphabet: str, length: int, dim: int, rng: np.random.Generator, scale: float = 1.0) -> SequenceCodec:
    """Random residue rows with standard deviation ``scale``; positional offsets have unit amplitude."""
    if scale <= 0:
        raise ValueError(f"codec scale must be > 0, got {scale}")
    table = np.zeros((len(alphabet) + 1, dim))
    table[1:] = rng.normal(0.0, scale, size=(len(alphabet), dim))
    return SequenceCodec(alphabet, table, length)


def encode_sequences(codec: SequenceCodec, ds) -> PointCloud:
    seqs = ds.sequences if isinstance(ds, SequenceDataset) else list(ds)
    index = {ch: i + 1 for i, ch in enumerate(codec.alphabet)}
    pe = codec.positions
    out = np.zeros((len(seqs), codec.length, codec.dim))
    for r, s in enumerate(seqs):
        if len(s) > codec.length:
            raise ValueError(f"sequence {s!r} longer than codec length {codec.length}")
        for p, ch in enumerate(s):
            if ch not in index:
                raise ValueError(f"residue {ch!r} not in codec alphabet {codec.alphabet!r}")
            out[r, p] = codec.table[index[ch]] + pe[p]
    ids = getattr(ds, "ids", None)
    return PointCloud(out.reshape(len(seqs), -1), ids)


def decode_sequences(codec: SequenceCodec, points) -> SequenceDataset:
    """Nearest table row per position; the first pad ends the sequence."""
    x = np.asarray(getattr(points, "x", points), dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != codec.length * codec.dim:
        raise ValueError(f"points have dimension {x.shape[1]}, codec expects {codec.length * codec.dim}")
    blocks = x.reshape(len(x), codec.length, codec.dim)
    pe = codec.positions
    # candidates per position: pad (no offset) and each residue row + offset
    cand = np.concatenate(
        [np.broadcast_to(codec.table[:1], (codec.length, 1, codec.dim)), codec.table[None, 1:, :] + pe[:, None, :]],
        axis=1,
    )
    d2 = ((blocks[:, :, None, :] - cand[None, :, :, :]) ** 2).sum(axis=3)
    tok = np.argmin(d2, axis=2)
    seqs = []
    for row in tok:
        chars = []
        for t in row:
            if t == 0:
                break
            chars.append(codec.alphabet[t - 1])
        seqs.append("".join(chars))
    return SequenceDataset(seqs, max_len=codec.length, alphabet=codec.alphabet)


# --- files -----------------------------------------------------------------


def load_point_cloud(path) -> PointCloud:
    """CSV, one sample per row. A non-numeric first column is taken as ids; a header row is skipped."""
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    rows = [r for r in rows if r]
    if rows and not _numeric(rows[0][-1]):
        rows = rows[1:]
    has_ids = bool(rows) and not _numeric(rows[0][0])
    ids = [r[0] for r in rows] if has_ids else None
    x = np.array([[float(v) for v in (r[1:] if has_ids else r)] for r in rows])
    return PointCloud(x, ids)


def save_point_cloud(path, pc: PointCloud) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["id"] if pc.ids else []) + [f"x{i + 1}" for i in range(pc.d)])
        for i, row in enumerate(pc.x):
            w.writerow(([pc.ids[i]] if pc.ids else []) + [repr(float(v)) for v in row])


def load_sequences(path, max_len: int = 25, alphabet: str = AMINO_ACIDS) -> SequenceDataset:
    """CSV with columns ``id, sequence`` and an optional numeric activity column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    seqs = [r["sequence"].strip().upper() for r in rows]
    ids = [r.get("id", str(i)) for i, r in enumerate(rows)]
    act = None
    extra = [c for c in (reader.fieldnames or []) if c not in ("id", "sequence")]
    if extra:
        act = np.array([float(r[extra[0]]) if r[extra[0]] not in ("", None) else np.nan for r in rows])
    return SequenceDataset(seqs, act, ids, max_len, alphabet)


def save_sequences(path, ds: SequenceDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "sequence"] + (["activity"] if ds.activity is not None else []))
        for i, s in enumerate(ds.sequences):
            rid = ds.ids[i] if ds.ids else str(i)
            w.writerow([rid, s] + ([repr(float(ds.activity[i]))] if ds.activity is not None else []))


def _numeric(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
