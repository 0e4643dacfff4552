"""Pullback distances and geodesics through a learned diffeomorphism.

With a Euclidean latent space, pullback geodesics are preimages of latent
straight lines, so everything reduces to encode, blend, decode.
"""

from __future__ import annotations

import csv

import numpy as np

from .diffeo import DiffeoModel, phi, phi_inverse, project_submanifold

SPACES = ("data", "latent", "submanifold")


def pullback_distance(model: DiffeoModel, x_i, x_j) -> float:
    """Euclidean distance between the latent images of ``x_i`` and ``x_j``."""
    z = phi(model, np.stack([np.asarray(x_i, float), np.asarray(x_j, float)]))
    return float(np.linalg.norm(z[0] - z[1]))


def _check_t(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError(f"geodesic time must lie in [0, 1], got {t}")
    return t


def _latent_endpoints(model, x_i, x_j, space):
    if space not in ("latent", "submanifold"):
        raise ValueError(f"space must be 'latent' or 'submanifold', got {space!r}")
    z = phi(model, np.stack([np.asarray(x_i, float), np.asarray(x_j, float)]))
    if space == "submanifold":
        z = project_submanifold(z, model.d_prime)
    return z[0], z[1]


def latent_geodesic(model: DiffeoModel, x_i, x_j, t, space: str = "latent") -> np.ndarray:
    """Latent points ``(1 - t) z_i + t z_j`` for scalar or vector ``t``."""
    t = _check_t(t)
    zi, zj = _latent_endpoints(model, x_i, x_j, space)
    return (1.0 - t)[..., None] * zi + t[..., None] * zj


def pullback_geodesic(model: DiffeoModel, x_i, x_j, t, space: str = "latent") -> np.ndarray:
    """Data-space geodesic point(s); a vector ``t`` returns one row per time."""
    t = _check_t(t)
    z = latent_geodesic(model, x_i, x_j, np.atleast_1d(t), space)
    out = phi_inverse(model, z)
    return out[0] if t.ndim == 0 else out


def geodesic_velocity(model: DiffeoModel, x_i, x_j, t, space: str = "latent") -> np.ndarray:
    """Latent velocity of the geodesic; constant ``z_j - z_i`` for a Euclidean latent space."""
    _check_t(t)
    zi, zj = _latent_endpoints(model, x_i, x_j, space)
    return zj - zi


def write_geodesic_csv(path, ts, points) -> None:
    """Columns ``t, x1..xd``, one row per evaluation time."""
    points = np.atleast_2d(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(points.shape[1])])
        for t, p in zip(np.atleast_1d(ts), points):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in p])
