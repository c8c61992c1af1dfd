"""Objective perturbation of the item profiles (uniform-budget DP-PMF).

Phase 1 trains plain PMF and keeps ``U`` private.  Phase 2 holds ``U``
fixed and descends on

    E~(V) = 1/2 sum I_ij (r_ij - u_i.v_j)^2 + lambda_u/2 sum ||u_i||^2
            + lambda_v/2 sum ||v_j||^2 + sum eta_j . v_j

whose minimizer is released.  Only ``V`` is publishable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, PreconditionError, ValidationError
from .noise import NoiseParams, resolve_sensitivity, sample_noise_matrix
from .pmf import (
    DIVERGENCE_LIMIT,
    FactorModel,
    _SweepKernel,
    step_size,
    train_pmf,
)
from .exceptions import DivergenceError
from .utils import ROLE_NOISE, check_positive, stream

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12


@dataclass(eq=False)
class PerturbedObjective:
    """Phase-2 objective: data, fixed ``U`` (d x N) and noise ``Q`` (d x M)."""

    data: object
    U: np.ndarray
    noise: np.ndarray
    lambda_u: float
    lambda_v: float
    epsilon: float = float("inf")

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.noise = np.asarray(self.noise, dtype=float)
        if self.U.shape[1] != self.data.num_users:
            raise DimensionMismatchError("U must have one column per user")
        if self.noise.shape != (self.U.shape[0], self.data.num_items):
            raise DimensionMismatchError(
                f"noise must be d x M = {(self.U.shape[0], self.data.num_items)}, "
                f"got {self.noise.shape}"
            )
        check_user_norms(self.U)


def check_user_norms(U):
    norms = np.linalg.norm(U, axis=0)
    if norms.size and norms.max() > 1.0 + NORM_TOLERANCE:
        i = int(norms.argmax())
        raise PreconditionError(
            f"||u_{i}|| = {norms[i]:.6g} > 1; the noise calibration assumes "
            "every user vector lies in the unit ball"
        )


def perturbed_objective_value(po, V):
    """Evaluate ``E~(V)`` including the constant user-regularization term."""
    V = np.asarray(V, dtype=float)
    if V.shape != po.noise.shape:
        raise DimensionMismatchError(f"V must be {po.noise.shape}, got {V.shape}")
    d = po.data
    resid = d.ratings - np.einsum("ij,ij->j", po.U[:, d.users], V[:, d.items])
    return (
        0.5 * float(resid @ resid)
        + 0.5 * po.lambda_u * float(np.sum(po.U * po.U))
        + 0.5 * po.lambda_v * float(np.sum(V * V))
        + float(np.sum(po.noise * V))
    )


def perturbed_grad_v(po, V, j):
    """``-sum_i I_ij (r_ij - u_i.v_j) u_i + lambda_v v_j + eta_j``."""
    d = po.data
    if not 0 <= j < d.num_items:
        raise IndexError(f"item index {j} out of range")
    sel = d.items == j
    Ui = po.U[:, d.users[sel]]
    resid = d.ratings[sel] - V[:, j] @ Ui
    return -(Ui @ resid) + po.lambda_v * V[:, j] + po.noise[:, j]


def noise_params(data, epsilon, cfg):
    delta = resolve_sensitivity(cfg.sensitivity, data.rating_min, data.rating_max)
    return NoiseParams(epsilon, delta, cfg.d)


def draw_noise(data, epsilon, cfg, sweep=None):
    """Noise matrix with one stream per item, keyed by the item's raw id."""
    params = noise_params(data, epsilon, cfg)
    keys = () if sweep is None else (sweep,)
    rngs = [stream(cfg.seed, ROLE_NOISE, ident, *keys) for ident in data.item_ids]
    return sample_noise_matrix(params, rngs)


def train_dp_v(data, U, V, epsilon, cfg, noise=None):
    """Phase 2: ``k2`` sweeps on the perturbed objective with ``U`` fixed.

    Parameters
    ----------
    data : SparseRatings
        Training ratings (the sampled set in the personalized scheme).
    U, V : ndarray
        Private user profiles (d x N, each column in the unit ball) and
        the phase-1 item profiles used as the starting point.
    epsilon : float or None
        Privacy budget.  ``None`` runs the same descent without noise.
    cfg : TrainConfig
        ``cfg.noise_mode`` selects one draw per item for the whole phase
        (``fixed_objective``) or a fresh draw every sweep (``per_iteration``).
    noise : ndarray, optional
        Explicit d x M noise matrix, overriding sampling (fixed mode only).

    Returns
    -------
    ndarray
        The released item profiles (d x M), neither clamped nor projected.
    """
    U = np.asarray(U, dtype=float)
    check_user_norms(U)
    if U.shape != (cfg.d, data.num_users) or np.shape(V) != (cfg.d, data.num_items):
        raise DimensionMismatchError("U and V do not match data and cfg.d")
    if len(data) == 0:
        raise ValidationError("cannot train on an empty rating set")
    per_sweep = epsilon is not None and noise is None and cfg.noise_mode == "per_iteration"
    if noise is not None:
        Q = np.asarray(noise, dtype=float)
    elif epsilon is None:
        Q = np.zeros((cfg.d, data.num_items))
    else:
        check_positive("epsilon", epsilon)
        Q = None if per_sweep else draw_noise(data, epsilon, cfg)
    Ur = np.ascontiguousarray(U.T)
    Vr = np.array(V, dtype=float).T.copy()
    kernel = _SweepKernel(data)
    step = step_size(cfg, len(data))
    const = 0.5 * cfg.lambda_u * float(np.sum(Ur * Ur))
    for beta in range(1, cfg.k2 + 1):
        if per_sweep:
            Q = draw_noise(data, epsilon, cfg, sweep=beta)
        Qr = Q.T
        resid = kernel.residuals(Ur, Vr)
        value = (0.5 * (resid @ resid) + const
                 + 0.5 * cfg.lambda_v * np.sum(Vr * Vr) + np.sum(Qr * Vr))
        if not np.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
            raise DivergenceError(beta, value, "phase 2")
        grad = cfg.lambda_v * Vr + Qr - kernel.item_pull(resid, Ur)
        Vr -= step * grad
    if not np.all(np.isfinite(Vr)):
        raise DivergenceError(cfg.k2, float("nan"), "phase 2")
    return Vr.T.copy()


def _config_echo(cfg, **extra):
    echo = cfg.as_dict()
    echo.update(extra)
    return echo


def run_plain_pmf(data, cfg):
    """Non-private baseline on the same two-phase schedule, noise set to zero."""
    phase1 = train_pmf(data, cfg)
    V = train_dp_v(data, phase1.U, phase1.V, None, cfg)
    return FactorModel(
        phase1.U, V, data.rating_min, data.rating_max,
        publishable=("U", "V"), mode="plain", config=_config_echo(cfg, mode="plain"),
        history=phase1.history,
    )


def run_dp_pmf(data, epsilon, cfg):
    """Uniform ``epsilon``-DP scheme: private ``U``, perturbed publishable ``V``."""
    check_positive("epsilon", epsilon)
    phase1 = train_pmf(data, cfg)
    V = train_dp_v(data, phase1.U, phase1.V, epsilon, cfg)
    delta = resolve_sensitivity(cfg.sensitivity, data.rating_min, data.rating_max)
    logger.info("dp-pmf: epsilon=%g delta=%g noise_mode=%s", epsilon, delta, cfg.noise_mode)
    return FactorModel(
        phase1.U, V, data.rating_min, data.rating_max,
        publishable=("V",), mode="dp",
        config=_config_echo(cfg, mode="dp", epsilon=float(epsilon), delta=delta),
        history=phase1.history,
    )
