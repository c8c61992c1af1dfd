"""Noise vectors with density proportional to ``exp(-eps * ||eta|| / delta)``.

In ``d`` dimensions that density factors into a uniform direction and a
radius with density ``r**(d-1) * exp(-eps * r / delta)``, i.e. a
Gamma(shape=d, scale=delta/eps) radius.  Sampling is exact; no rejection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .utils import check_count, check_positive


@dataclass(frozen=True)
class NoiseParams:
    epsilon: float
    delta: float
    dim: int

    def __post_init__(self):
        check_positive("epsilon", self.epsilon)
        check_positive("delta", self.delta)
        check_count("dim", self.dim)

    @property
    def scale(self):
        return self.delta / self.epsilon


def resolve_sensitivity(mode, rating_min, rating_max):
    """Sensitivity of the data term to one rating.

    ``add_remove`` (a rating flips between present and absent) gives
    ``r_max``; ``modify`` (one nonzero rating replaced by another) gives
    ``r_max - r_min``.
    """
    if mode == "add_remove":
        delta = rating_max
    elif mode == "modify":
        delta = rating_max - rating_min
    else:
        raise ValidationError(f"unknown sensitivity mode {mode!r}")
    if delta <= 0:
        raise ValidationError(f"sensitivity resolved to {delta}; must be positive")
    return float(delta)


def sample_radius(params, rng, size=None):
    """Gamma(d, delta/eps) radii as sums of ``d`` exponentials (integer shape)."""
    shape = (params.dim,) if size is None else (size, params.dim)
    return rng.exponential(params.scale, size=shape).sum(axis=-1)


def sample_direction(dim, rng, size=None):
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw defensively
    while np.any(norm == 0):
        g = np.where(norm == 0, rng.standard_normal(shape), g)
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / norm


def sample_noise(params, rng):
    """One noise vector of length ``params.dim``."""
    direction = sample_direction(params.dim, rng)
    return direction * sample_radius(params, rng)


def sample_noise_matrix(params, rngs):
    """``d x M`` noise matrix, column ``j`` drawn from ``rngs[j]``."""
    out = np.empty((params.dim, len(rngs)))
    for j, g in enumerate(rngs):
        out[:, j] = sample_noise(params, g)
    return out
