"""Training the diffeomorphism to be an isometry onto a low-dimensional latent subspace.

The objective is a weighted sum of four terms evaluated on a minibatch:

* global isometry: mean squared mismatch between latent and target distances,
* graph matching: mismatch between differences of distance-matrix rows,
* submanifold: L1 size of the latent coordinates beyond ``d_prime``,
* stability: expected squared vector-Jacobian norm of the ODE field along
  each trajectory, with Gaussian probe vectors.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .datasets import PointCloud, split_indices
from .diffeo import DiffeoModel, init_diffeo, integrate_with_taps, phi, phi_inverse
from .manifold_metrics import DistanceMatrix
from .numerics import autodiff as ad
from .numerics.mlp import MlpParams, mlp_vjp
from .numerics.optim import adam_init, adam_step
from .numerics.rng import make_rng

log = logging.getLogger(__name__)

TERMS = ("global_isometry", "graph_matching", "submanifold", "stability")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class IsometryTrainConfig:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 0.01
    epochs: int = 1000
    warmup_epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-4
    split: float = 0.8
    seed: int = 0
    d_prime: int = 1
    n_steps: int = 10
    hidden: int = 64
    n_layers: int = 5

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError(f"warmup_epochs must lie in [0, epochs={self.epochs}], got {self.warmup_epochs}")
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("d_prime", "n_steps", "hidden", "n_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @classmethod
    def from_dict(cls, d: dict) -> "IsometryTrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown isometry config field(s): {sorted(unknown)}")
        return cls(**d)

    def alphas(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.alpha3, self.alpha4)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainReport:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    metrics: dict = field(default_factory=dict)
    train_idx: list[int] = field(default_factory=list)
    test_idx: list[int] = field(default_factory=list)

    def write_csv(self, path) -> None:
        cols = ["epoch", "train_total"] + [f"train_{t}" for t in TERMS] + ["test_total"] + [f"test_{t}" for t in TERMS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.history:
                w.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])

    def to_dict(self) -> dict:
        return asdict(self)


# --- loss terms on latent batches -----------------------------------------


def _global_isometry(dz, dsub):
    return ad.mean(ad.square(ad.sub(dz, dsub)))


def _graph_matching(dz, dsub):
    # (1/n) sum_i sum_j ||E_i - E_j||^2 == 2 sum_i ||E_i - mean_k E_k||^2, E = dz - dsub
    e = ad.sub(dz, dsub)
    n = ad.value(e).shape[0]
    centred = ad.sub(e, ad.matmul(np.full((n, n), 1.0 / n), e))
    return 2.0 * ad.total(ad.square(centred))


def _submanifold(z, d_prime):
    n, d = ad.value(z).shape
    if d_prime >= d:
        return 0.0
    return ad.total(ad.absolute(ad.cols(z, d_prime))) * (1.0 / n)


def _stability(params: MlpParams, taps, noise):
    acc = 0.0
    for (z, pre), eps in zip(taps, noise):
        v = mlp_vjp(params, pre, eps)
        n = eps.shape[0]
        acc = acc + ad.total(ad.square(v)) * (1.0 / n)
    return acc * (1.0 / len(taps))


def _objective(params: MlpParams, mu, x, dsub, d_prime, n_steps, alphas, noise):
    """Weighted total (possibly a Var) and the weighted contributions as floats."""
    a1, a2, a3, a4 = alphas
    z, taps = integrate_with_taps(params, x - mu, n_steps)
    parts = {}
    total = 0.0
    if a1 > 0 or a2 > 0:
        dz = ad.pairwise_dist(z)
        if a1 > 0:
            parts["global_isometry"] = a1 * _global_isometry(dz, dsub)
        if a2 > 0:
            parts["graph_matching"] = a2 * _graph_matching(dz, dsub)
    if a3 > 0:
        parts["submanifold"] = a3 * _submanifold(z, d_prime)
    if a4 > 0:
        parts["stability"] = a4 * _stability(params, taps, noise)
    for v in parts.values():
        total = total + v
    contrib = {t: float(np.asarray(ad.value(parts[t]))) if t in parts else 0.0 for t in TERMS}
    return total, contrib


def _draw_noise(rng, n_steps, n, d):
    return [rng.standard_normal((n, d)) for _ in range(n_steps)]


# --- public single-term evaluators ----------------------------------------


def _latent(model, batch):
    x = np.asarray(getattr(batch, "x", batch), dtype=np.float64)
    return phi(model, x)


def loss_global_isometry(model: DiffeoModel, batch, d_sub) -> float:
    z = _latent(model, batch)
    return float(_global_isometry(ad.pairwise_dist(z), np.asarray(d_sub, float)))


def loss_graph_matching(model: DiffeoModel, batch, d_sub) -> float:
    z = _latent(model, batch)
    return float(_graph_matching(ad.pairwise_dist(z), np.asarray(d_sub, float)))


def loss_submanifold(model: DiffeoModel, batch) -> float:
    return float(_submanifold(_latent(model, batch), model.d_prime))


def loss_stability(model: DiffeoModel, batch, rng: np.random.Generator) -> float:
    x = np.asarray(getattr(batch, "x", batch), dtype=np.float64)
    _, taps = integrate_with_taps(model.field, x - model.mu, model.n_steps)
    noise = _draw_noise(rng, model.n_steps, x.shape[0], model.d)
    return float(_stability(model.field, taps, noise))


def total_loss(model: DiffeoModel, batch, d_sub, alphas, rng) -> tuple[float, dict]:
    x = np.asarray(getattr(batch, "x", batch), dtype=np.float64)
    noise = _draw_noise(rng, model.n_steps, x.shape[0], model.d)
    tot, parts = _objective(model.field, model.mu, x, np.asarray(d_sub, float), model.d_prime, model.n_steps, alphas, noise)
    return float(np.asarray(ad.value(tot))), parts


def loss_and_grad(model: DiffeoModel, batch, d_sub, alphas, noise):
    """Total loss and its gradient with respect to the field parameters (flat list)."""
    x = np.asarray(getattr(batch, "x", batch), dtype=np.float64)
    template = model.field
    d_sub = np.asarray(d_sub, float)

    def fn(arrays):
        tot, _ = _objective(template.with_arrays(arrays), model.mu, x, d_sub, model.d_prime, model.n_steps, alphas, noise)
        return tot

    return ad.value_and_grad(fn, template.arrays())


# --- metrics ----------------------------------------------------------------


def ablation_metrics(model: DiffeoModel, holdout, d_matrix) -> tuple[float, float, float]:
    """Invertibility, low-dimensionality and isometry errors on held-out points.

    ``d_matrix`` holds the target distances among the holdout points.
    """
    x = np.asarray(getattr(holdout, "x", holdout), dtype=np.float64)
    d = np.asarray(getattr(d_matrix, "values", d_matrix), dtype=np.float64)
    z = phi(model, x)
    back = phi_inverse(model, z)
    eps_inv = float(np.mean(np.sum((x - back) ** 2, axis=1)))
    eps_ld = float(np.mean(np.sum(np.abs(z[:, model.d_prime :]), axis=1) ** 2))
    dz = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2))
    eps_iso = float(np.mean((d - dz) ** 2))
    return eps_inv, eps_ld, eps_iso


# --- training ---------------------------------------------------------------


def train_isometry(data, d_matrix: DistanceMatrix, cfg: IsometryTrainConfig, progress=None):
    """Adam on the four-term objective; returns ``(best_model, report)``.

    During the first ``warmup_epochs`` epochs the distance terms are switched
    off. Each epoch the full test loss is computed with the post-warmup
    weights, and the parameters with the lowest test loss are returned.
    """
    cfg.validate()
    pc = data if isinstance(data, PointCloud) else PointCloud(data)
    dm = d_matrix.values if isinstance(d_matrix, DistanceMatrix) else np.asarray(d_matrix, float)
    if dm.shape != (pc.n, pc.n):
        raise ValueError(f"distance matrix is {dm.shape}, data has {pc.n} points")

    train_idx, test_idx = split_indices(pc.n, cfg.split, cfg.seed)
    x_tr, x_te = pc.x[train_idx], pc.x[test_idx]
    d_tr, d_te = dm[np.ix_(train_idx, train_idx)], dm[np.ix_(test_idx, test_idx)]

    model = init_diffeo(x_tr, cfg.d_prime, make_rng(cfg.seed, 0), cfg.hidden, cfg.n_layers, cfg.n_steps)
    model.config_hash = cfg.hash()
    arrays = model.field.arrays()
    template = model.field
    opt = adam_init(arrays, cfg.learning_rate)
    batch_rng = make_rng(cfg.seed, 1)
    noise_rng = make_rng(cfg.seed, 2)
    full_alphas = cfg.alphas()
    warm_alphas = (0.0, 0.0, cfg.alpha3, cfg.alpha4)

    report = TrainReport(train_idx=train_idx.tolist(), test_idx=test_idx.tolist())
    best = (np.inf, arrays, -1)
    n_tr = len(train_idx)
    for epoch in range(cfg.epochs):
        alphas = warm_alphas if epoch < cfg.warmup_epochs else full_alphas
        perm = batch_rng.permutation(n_tr)
        sums = dict.fromkeys(TERMS, 0.0)
        tot_sum, n_batches = 0.0, 0
        for b, start in enumerate(range(0, n_tr, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue
            noise = _draw_noise(noise_rng, cfg.n_steps, len(idx), pc.d) if alphas[3] > 0 else None
            xb, db = x_tr[idx], d_tr[np.ix_(idx, idx)]
            parts = {}

            def fn(arrs):
                tot, p = _objective(template.with_arrays(arrs), model.mu, xb, db, cfg.d_prime, cfg.n_steps, alphas, noise)
                parts.update(p)
                return tot

            try:
                val, grads = ad.value_and_grad(fn, arrays)
            except ad.NumericError as err:
                raise TrainingError(f"epoch {epoch}, batch {b}: {err}") from err
            arrays, opt = adam_step(opt, arrays, grads)
            tot_sum += val
            n_batches += 1
            for t in TERMS:
                sums[t] += parts.get(t, 0.0)

        test_noise = _draw_noise(make_rng(cfg.seed, 3, epoch), cfg.n_steps, len(test_idx), pc.d)
        try:
            t_tot, t_parts = _objective(
                template.with_arrays(arrays), model.mu, x_te, d_te, cfg.d_prime, cfg.n_steps, full_alphas, test_noise
            )
        except ad.NumericError as err:
            raise TrainingError(f"epoch {epoch}, test evaluation: {err}") from err
        t_tot = float(np.asarray(ad.value(t_tot)))
        row = {"epoch": epoch, "train_total": tot_sum / max(n_batches, 1), "test_total": t_tot}
        row.update({f"train_{t}": sums[t] / max(n_batches, 1) for t in TERMS})
        row.update({f"test_{t}": t_parts[t] for t in TERMS})
        report.history.append(row)
        if t_tot < best[0]:
            best = (t_tot, arrays, epoch)
        if progress is not None:
            progress(row)

    model = model.with_field(template.with_arrays([np.array(a, copy=True) for a in best[1]]))
    report.best_epoch = best[2]
    eps_inv, eps_ld, eps_iso = ablation_metrics(model, x_te, d_te)
    report.metrics = {"eps_inv": eps_inv, "eps_ld": eps_ld, "eps_iso": eps_iso}
    return model, report
