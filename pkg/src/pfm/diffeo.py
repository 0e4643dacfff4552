"""Neural-ODE diffeomorphism ``x -> phi_theta(x - mu)`` and its inverse.

The vector field is a time-conditioned swish MLP integrated with classical
fixed-step RK4 over t in [0, 1]. The inverse integrates the same field
backwards from t = 1 on the mirrored grid. The latent chart on the first
``d_prime`` coordinates is the identity (Euclidean latent submanifold).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import autodiff as ad
from .numerics.mlp import MlpParams, init_mlp, mlp_forward

FORWARD = "forward"
BACKWARD = "backward"


@dataclass
class DiffeoModel:
    field: MlpParams
    mu: np.ndarray
    d_prime: int
    n_steps: int = 10
    chart: str = "euclidean"
    config_hash: str = ""

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if not 1 <= self.d_prime <= self.d:
            raise ValueError(f"d_prime={self.d_prime} outside [1, {self.d}]")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu must be finite")
        if self.chart != "euclidean":
            raise NotImplementedError(f"latent chart {self.chart!r} is not supported")

    @property
    def d(self) -> int:
        return int(self.mu.shape[0])

    def with_field(self, params: MlpParams) -> "DiffeoModel":
        return DiffeoModel(params, self.mu, self.d_prime, self.n_steps, self.chart, self.config_hash)


def init_diffeo(
    data: np.ndarray,
    d_prime: int,
    rng: np.random.Generator,
    hidden: int = 64,
    n_layers: int = 5,
    n_steps: int = 10,
) -> DiffeoModel:
    """Fresh model centred on the data mean; the last layer starts at zero so phi(x) = x - mu."""
    data = np.asarray(data, dtype=np.float64)
    d = data.shape[1]
    params = init_mlp(d, d, hidden, n_layers, rng, time_embed=True, zero_last=True)
    return DiffeoModel(params, data.mean(axis=0), d_prime, n_steps)


def _as_field(f):
    if isinstance(f, MlpParams):
        return lambda z, t: mlp_forward(f, z, t)
    return f


def ode_solve(f, z0, direction: str = FORWARD, n_steps: int = 10):
    """RK4 with step 1/n_steps; forward runs t: 0 -> 1, backward t: 1 -> 0.

    ``f`` is either :class:`MlpParams` or a callable ``f(z, t)`` acting on a
    batch of states. A 1-D ``z0`` is treated as a single state.
    """
    fn = _as_field(f)
    single = ad.value(z0).ndim == 1
    z = z0[None, :] if single and not isinstance(z0, ad.Var) else z0
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if direction == FORWARD:
        h, t0 = 1.0 / n_steps, 0.0
    elif direction == BACKWARD:
        h, t0 = -1.0 / n_steps, 1.0
    else:
        raise ValueError(f"unknown direction {direction!r}")
    for k in range(n_steps):
        z = _rk4_step(fn, z, t0 + k * h, h)
        if not np.all(np.isfinite(ad.value(z))):
            raise ad.NumericError("ode_solve", f"RK4 step {k} of {n_steps}, {direction}")
    return z[0] if single and not isinstance(z, ad.Var) else z


def _rk4_step(fn, z, t, h, k1=None):
    if k1 is None:
        k1 = fn(z, t)
    k2 = fn(z + (0.5 * h) * k1, t + 0.5 * h)
    k3 = fn(z + (0.5 * h) * k2, t + 0.5 * h)
    k4 = fn(z + h * k3, t + h)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_with_taps(params: MlpParams, z0, n_steps: int):
    """Forward RK4 that also returns, per grid time, the state and the
    hidden pre-activations of the first stage evaluation there.

    Used by training, where the stability penalty needs the field's
    Jacobian along each trajectory.
    """
    h = 1.0 / n_steps
    taps = []
    z = z0
    for k in range(n_steps):
        t = k * h
        k1, pre = mlp_forward(params, z, t, return_pre=True)
        taps.append((z, pre))
        z = _rk4_step(lambda zz, tt: mlp_forward(params, zz, tt), z, t, h, k1=k1)
    return z, taps


def phi(model: DiffeoModel, x, n_steps: int | None = None):
    """Map data points to latent coordinates."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, x)
    return ode_solve(model.field, x - model.mu, FORWARD, n_steps or model.n_steps)


def phi_inverse(model: DiffeoModel, z, n_steps: int | None = None):
    """Map latent coordinates back to data space."""
    z = np.asarray(z, dtype=np.float64)
    _check_dim(model, z)
    return ode_solve(model.field, z, BACKWARD, n_steps or model.n_steps) + model.mu


def project_submanifold(z, d_prime: int):
    """Keep the first ``d_prime`` latent coordinates and zero the rest."""
    out = np.array(z, dtype=np.float64, copy=True)
    out[..., d_prime:] = 0.0
    return out


def _check_dim(model, x):
    if x.shape[-1] != model.d:
        raise ad.ShapeError(f"points have dimension {x.shape[-1]}, model expects {model.d}")
