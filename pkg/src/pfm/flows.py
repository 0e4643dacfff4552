"""Flow matching in the ambient space, on the latent manifold and on the latent submanifold."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .datasets import PointCloud, split_indices
from .diffeo import DiffeoModel, _rk4_step, phi, phi_inverse, project_submanifold
from .numerics import autodiff as ad
from .numerics.mlp import MlpParams, init_mlp, mlp_forward
from .numerics.optim import adam_init, adam_step
from .numerics.rng import make_rng

MODES = ("cfm", "pfm", "dprime_pfm")
SPACE_OF_MODE = {"cfm": "data", "pfm": "latent", "dprime_pfm": "submanifold"}
SIGMA_MIN = 1e-4


@dataclass
class FlowModel:
    vt_params: MlpParams
    space: str
    dim: int
    sigma_min: float = SIGMA_MIN
    kappa: str = "linear"
    diffeo_hash: str = ""

    def __post_init__(self):
        if self.space not in SPACE_OF_MODE.values():
            raise ValueError(f"unknown flow space {self.space!r}")
        if not 0.0 < self.sigma_min < 1.0:
            raise ValueError(f"sigma_min must lie in (0, 1), got {self.sigma_min}")
        if self.vt_params.in_dim != self.dim or self.vt_params.out_dim != self.dim:
            raise ValueError(f"field maps {self.vt_params.in_dim}->{self.vt_params.out_dim}, dim is {self.dim}")

    @property
    def n_params(self) -> int:
        return self.vt_params.n_params


@dataclass
class FlowTrainConfig:
    epochs: int = 5000
    learning_rate: float = 5e-4
    min_learning_rate: float = 5e-6
    batch_size: int = 64
    n_simulation_steps: int = 10
    seed: int = 0
    hidden: int = 64
    n_layers: int = 10
    split: float = 0.8
    sigma_min: float = SIGMA_MIN

    def __post_init__(self):
        self.validate()

    def validate(self):
        from .isometry import ConfigError

        if self.n_simulation_steps < 1:
            raise ConfigError(f"n_simulation_steps must be >= 1, got {self.n_simulation_steps}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0 or not 0 <= self.min_learning_rate <= self.learning_rate:
            raise ConfigError(
                f"need 0 <= min_learning_rate <= learning_rate, got {self.min_learning_rate}, {self.learning_rate}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        if not 0.0 < self.sigma_min < 1.0:
            raise ConfigError(f"sigma_min must lie in (0, 1), got {self.sigma_min}")
        if self.hidden < 1 or self.n_layers < 1:
            raise ConfigError("hidden and n_layers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "FlowTrainConfig":
        from .isometry import ConfigError

        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown flow config field(s): {sorted(unknown)}")
        return cls(**d)


def diffeo_hash(model: DiffeoModel) -> str:
    h = hashlib.sha256()
    for a in model.field.arrays():
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(model.mu, dtype="<f8").tobytes())
    h.update(json.dumps([model.d_prime, model.n_steps]).encode())
    return h.hexdigest()[:16]


# --- targets ----------------------------------------------------------------


def cfm_target(x0, x1, t, sigma_min: float = SIGMA_MIN):
    """Point on the conditional OT path and the field there.

    ``t`` may be a scalar or one value per row.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1) or (sigma_min == 0 and np.any(t >= 1)):
        raise ValueError("cfm_target needs t in [0, 1), or t <= 1 when sigma_min > 0")
    tt = t[..., None] if t.ndim and x0.ndim > 1 else t
    sigma_t = 1.0 - (1.0 - sigma_min) * tt
    xt = sigma_t * x0 + tt * x1
    # (x1 - (1 - sigma_min) xt) / sigma_t simplifies to a value independent of t
    ut = x1 - (1.0 - sigma_min) * x0
    return xt, ut


def _encode(diffeo: DiffeoModel, x, space):
    z = phi(diffeo, np.asarray(x, dtype=np.float64))
    return project_submanifold(z, diffeo.d_prime) if space == "submanifold" else z


def pfm_target(diffeo: DiffeoModel, x0, x1, t, space: str = "latent", kappa=None):
    """Latent straight-line interpolant and its velocity.

    ``z_t = kappa(t) z0 + (1 - kappa(t)) z1`` with ``kappa(t) = 1 - t`` by default;
    ``kappa`` may be a pair ``(k, dk)`` of callables.
    """
    if space not in ("latent", "submanifold"):
        raise ValueError(f"space must be 'latent' or 'submanifold', got {space!r}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    z0, z1 = _encode(diffeo, x0, space), _encode(diffeo, x1, space)
    k, dk = kappa if kappa is not None else (lambda s: 1.0 - s, lambda s: -np.ones_like(s))
    kt = np.asarray(k(t))
    dkt = np.asarray(dk(t))
    if kt.ndim and z0.ndim > 1:
        kt, dkt = kt[:, None], dkt[:, None]
    return kt * z0 + (1.0 - kt) * z1, dkt * (z0 - z1)


# --- training -----------------------------------------------------------------


def _operating_points(data, mode, diffeo):
    x = np.asarray(getattr(data, "x", data), dtype=np.float64)
    if mode == "cfm":
        return x
    if diffeo is None:
        raise ValueError(f"mode {mode!r} needs a trained diffeomorphism")
    z = phi(diffeo, x)
    return z[:, : diffeo.d_prime] if mode == "dprime_pfm" else z


def _fm_loss(params, xt, t, ut):
    v = mlp_forward(params, xt, t)
    n = ut.shape[0]
    return ad.total(ad.square(ad.sub(v, ut))) * (1.0 / n)


def _draw(rng, z1, sigma_min, mode):
    n, dim = z1.shape
    z0 = rng.standard_normal((n, dim))
    t = rng.uniform(0.0, 1.0, size=n)
    if mode == "cfm":
        zt, ut = cfm_target(z0, z1, t, sigma_min)
    else:
        zt = (1.0 - t)[:, None] * z0 + t[:, None] * z1
        ut = z1 - z0
    return zt, t, ut


def train_flow(data, cfg: FlowTrainConfig, mode: str = "cfm", diffeo: DiffeoModel | None = None, progress=None):
    """Returns ``(flow, history)``; the flow is the checkpoint with the lowest test loss."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    cfg.validate()
    z = _operating_points(data, mode, diffeo)
    n, dim = z.shape
    tr, te = split_indices(n, cfg.split, cfg.seed)
    z_tr, z_te = z[tr], z[te]

    params = init_mlp(dim, dim, cfg.hidden, cfg.n_layers, make_rng(cfg.seed, 10), time_embed=True)
    arrays = params.arrays()
    batches_per_epoch = max(1, -(-len(tr) // cfg.batch_size))
    opt = adam_init(arrays, cfg.learning_rate, total_steps=cfg.epochs * batches_per_epoch, min_lr=cfg.min_learning_rate)
    rng = make_rng(cfg.seed, 11)
    test_draw = _draw(make_rng(cfg.seed, 12), z_te, cfg.sigma_min, mode)

    history = []
    best = (np.inf, arrays, -1)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(tr))
        tot, nb = 0.0, 0
        for b, start in enumerate(range(0, len(tr), cfg.batch_size)):
            zt, t, ut = _draw(rng, z_tr[perm[start : start + cfg.batch_size]], cfg.sigma_min, mode)
            try:
                val, grads = ad.value_and_grad(lambda a: _fm_loss(params.with_arrays(a), zt, t, ut), arrays)
            except ad.NumericError as err:
                from .isometry import TrainingError

                raise TrainingError(f"flow epoch {epoch}, batch {b}: {err}") from err
            arrays, opt = adam_step(opt, arrays, grads)
            tot += val
            nb += 1
        test = float(_fm_loss(params.with_arrays(arrays), *test_draw))
        row = {"epoch": epoch, "train_loss": tot / nb, "test_loss": test, "lr": opt.current_lr()}
        history.append(row)
        if test < best[0]:
            best = (test, arrays, epoch)
        if progress is not None:
            progress(row)

    flow = FlowModel(
        params.with_arrays([np.array(a, copy=True) for a in best[1]]),
        SPACE_OF_MODE[mode],
        dim,
        cfg.sigma_min,
        "linear",
        diffeo_hash(diffeo) if diffeo is not None and mode != "cfm" else "",
    )
    return flow, history


# --- sampling -------------------------------------------------------------------


def _decode(flow: FlowModel, z, diffeo):
    if flow.space == "data":
        return z
    if diffeo is None:
        raise ValueError(f"a {flow.space} flow needs its diffeomorphism to decode samples")
    if flow.diffeo_hash and flow.diffeo_hash != diffeo_hash(diffeo):
        raise ValueError("diffeomorphism does not match the one the flow was trained with")
    if flow.space == "submanifold":
        z = np.concatenate([z, np.zeros((len(z), diffeo.d - flow.dim))], axis=1)
    return phi_inverse(diffeo, z)


def _field(flow):
    return lambda z, t: mlp_forward(flow.vt_params, z, np.full(len(z), t))


def _integrate(flow, z, t0, t1, n_steps, step_offset=0):
    fn = _field(flow)
    h = (t1 - t0) / n_steps
    t = t0
    for k in range(n_steps):
        z = _rk4_step(fn, z, t, h)
        if not np.all(np.isfinite(z)):
            raise ad.NumericError("sample", f"RK4 step {step_offset + k}")
        t = t0 + (k + 1) * h
    return z


def sample(flow: FlowModel, n: int, rng: np.random.Generator, diffeo: DiffeoModel | None = None, n_steps: int = 10):
    z0 = rng.standard_normal((n, flow.dim))
    return PointCloud(_decode(flow, _integrate(flow, z0, 0.0, 1.0, n_steps), diffeo))


def trajectory(flow: FlowModel, z0, n_times: int, diffeo: DiffeoModel | None = None, n_steps: int = 10):
    """Decoded frames at ``n_times`` uniform times from 0 to 1."""
    if n_times < 2:
        raise ValueError("n_times must be >= 2")
    z = np.atleast_2d(np.asarray(z0, dtype=np.float64))
    per = max(1, round(n_steps / (n_times - 1)))
    grid = np.linspace(0.0, 1.0, n_times)
    frames = [PointCloud(_decode(flow, z, diffeo))]
    for i in range(n_times - 1):
        z = _integrate(flow, z, grid[i], grid[i + 1], per, i * per)
        frames.append(PointCloud(_decode(flow, z, diffeo)))
    return frames


def write_trajectory_csv(path, frames, times=None) -> None:
    times = np.linspace(0.0, 1.0, len(frames)) if times is None else times
    d = frames[0].d
    with open(path, "w") as fh:
        fh.write(",".join(["t", "sample"] + [f"x{i + 1}" for i in range(d)]) + "\n")
        for t, fr in zip(times, frames):
            for j, row in enumerate(fr.x):
                fh.write(",".join([repr(float(t)), str(j)] + [repr(float(v)) for v in row]) + "\n")


def flow_config_hash(cfg: FlowTrainConfig, mode: str) -> str:
    return hashlib.sha256(json.dumps({**asdict(cfg), "mode": mode}, sort_keys=True).encode()).hexdigest()[:16]
