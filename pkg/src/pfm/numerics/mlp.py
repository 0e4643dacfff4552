"""Swish MLPs with an optional sine-cosine time embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

N_FREQ = 8
TIME_DIM = 2 * N_FREQ
FREQS = np.geomspace(1.0, 1000.0, N_FREQ)


def time_embedding(t) -> np.ndarray:
    """Sine-cosine features of ``t``; returns shape (1, 16) for scalar t, (n, 16) otherwise."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    arg = t[:, None] * FREQS[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


@dataclass
class MlpParams:
    """Dense layers ``weights[l]`` of shape (fan_in, fan_out) with matching ``biases[l]``.

    When ``time_embed`` is set the first layer's rows are ``in_dim`` state
    rows followed by ``TIME_DIM`` embedding rows. Entries may be plain arrays
    or :class:`~pfm.numerics.autodiff.Var` leaves while differentiating.
    """

    weights: list
    biases: list
    time_embed: bool = False
    activation: str = "swish"

    @property
    def in_dim(self) -> int:
        rows = ad.value(self.weights[0]).shape[0]
        return rows - TIME_DIM if self.time_embed else rows

    @property
    def out_dim(self) -> int:
        return ad.value(self.weights[-1]).shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.in_dim] + [ad.value(w).shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return int(sum(ad.value(w).size + ad.value(b).size for w, b in zip(self.weights, self.biases)))

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays) -> "MlpParams":
        arrays = list(arrays)
        return MlpParams(arrays[0::2], arrays[1::2], self.time_embed, self.activation)

    def copy(self) -> "MlpParams":
        return self.with_arrays([np.array(ad.value(a), copy=True) for a in self.arrays()])


def init_mlp(
    in_dim: int,
    out_dim: int,
    hidden: int,
    n_layers: int,
    rng: np.random.Generator,
    time_embed: bool = False,
    zero_last: bool = False,
) -> MlpParams:
    """LeCun-normal weights, zero biases. ``n_layers`` counts dense layers."""
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    first = in_dim + (TIME_DIM if time_embed else 0)
    dims = [first] + [hidden] * (n_layers - 1) + [out_dim]
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        if zero_last and l == n_layers - 1:
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, time_embed)


def mlp_forward(params: MlpParams, x, t=None, return_pre: bool = False):
    """Evaluate the network on a batch ``x`` of shape (n, in_dim).

    Hidden layers apply swish; the final layer is linear. ``t`` is a scalar
    or a length-n vector and is required iff the network was built with a
    time embedding. With ``return_pre`` the hidden pre-activations are also
    returned, for :func:`mlp_vjp`.
    """
    W, b = params.weights, params.biases
    xv = ad.value(x)
    if xv.ndim != 2:
        raise ad.ShapeError(f"expected a 2-D batch, got shape {xv.shape}")
    d_in = params.in_dim
    if xv.shape[1] != d_in:
        raise ad.ShapeError(f"input has {xv.shape[1]} features, network expects {d_in}")
    if params.time_embed:
        if t is None:
            raise ad.ShapeError("network is time-conditioned but no time was given")
        h = ad.matmul(x, ad.rows(W[0], 0, d_in))
        h = h + ad.matmul(time_embedding(t), ad.rows(W[0], d_in))
    else:
        h = ad.matmul(x, W[0])
    h = h + b[0]
    pre = []
    for l in range(1, len(W)):
        pre.append(h)
        h = ad.matmul(ad.swish(h), W[l]) + b[l]
    if return_pre:
        return h, pre
    return h


def mlp_vjp(params: MlpParams, pre: list, cotangent):
    """Row-wise ``cotangent^T d(out)/d(x)`` from cached pre-activations.

    Built from differentiable primitives, so the result can itself be
    differentiated with respect to the parameters.
    """
    W = params.weights
    g = cotangent
    for l in range(len(W) - 1, 0, -1):
        g = ad.matmul(g, ad.transpose(W[l]))
        g = g * ad.dswish(pre[l - 1])
    first = ad.rows(W[0], 0, params.in_dim) if params.time_embed else W[0]
    return ad.matmul(g, ad.transpose(first))
