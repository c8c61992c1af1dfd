"""Non-private probabilistic matrix factorization by full-batch descent."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatchError, DivergenceError, ValidationError
from .utils import (
    ROLE_ITEM_INIT,
    ROLE_USER_INIT,
    check_count,
    check_positive,
    random_unit_columns,
)

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12
SENSITIVITY_MODES = ("add_remove", "modify")
NOISE_MODES = ("fixed_objective", "per_iteration")


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters shared by every training mode.

    ``grad_normalization`` divides each descent step by the number of
    training ratings, i.e. the update is ``x <- x - (gamma / n) * grad E``.
    The objective being minimized is unchanged, so the minimizer (and the
    calibration of the perturbed objective in phase 2) does not depend on
    it.  ``project_each_sweep`` keeps every user vector inside the unit ball
    after each phase-1 sweep instead of only at the end.
    """

    d: int = 20
    gamma: float = 50.0
    lambda_u: float = 0.01
    lambda_v: float = 0.01
    k1: int = 50
    k2: int = 50
    seed: int = 0
    grad_normalization: bool = True
    project_each_sweep: bool = True
    sensitivity: str = "add_remove"
    noise_mode: str = "fixed_objective"

    def __post_init__(self):
        check_count("d", self.d)
        check_positive("gamma", self.gamma)
        check_positive("lambda_u", self.lambda_u)
        check_positive("lambda_v", self.lambda_v)
        check_count("k1", self.k1)
        check_count("k2", self.k2)
        check_count("seed", self.seed, minimum=0)
        if self.sensitivity not in SENSITIVITY_MODES:
            raise ValidationError(f"sensitivity must be one of {SENSITIVITY_MODES}")
        if self.noise_mode not in NOISE_MODES:
            raise ValidationError(f"noise_mode must be one of {NOISE_MODES}")

    def replace(self, **changes):
        return TrainConfig(**{**asdict(self), **changes})

    def as_dict(self):
        return asdict(self)


@dataclass(eq=False)
class FactorModel:
    """User profiles ``U`` (d x N) and item profiles ``V`` (d x M).

    ``publishable`` lists the matrices that may leave the recommender:
    ``("U", "V")`` for plain PMF, ``("V",)`` for the private schemes.
    """

    U: np.ndarray
    V: np.ndarray
    rating_min: float = 1.0
    rating_max: float = 5.0
    publishable: tuple = ("U", "V")
    mode: str = "plain"
    config: dict = field(default_factory=dict)
    affine: tuple | None = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[0] != self.V.shape[0]:
            raise DimensionMismatchError(
                f"U {self.U.shape} and V {self.V.shape} must be d x N and d x M"
            )
        self.publishable = tuple(self.publishable)

    @property
    def d(self):
        return self.U.shape[0]

    @property
    def num_users(self):
        return self.U.shape[1]

    @property
    def num_items(self):
        return self.V.shape[1]

    @property
    def is_private(self):
        return "U" not in self.publishable

    def raw_scores(self, users, items):
        return np.einsum("ij,ij->j", self.U[:, users], self.V[:, items])

    def predict_many(self, users, items):
        """Clamped predictions for paired index arrays."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if users.size and (users.min() < 0 or users.max() >= self.num_users):
            raise IndexError("user index out of range")
        if items.size and (items.min() < 0 or items.max() >= self.num_items):
            raise IndexError("item index out of range")
        return np.clip(self.raw_scores(users, items), self.rating_min, self.rating_max)


def predict(model, i, j):
    """``u_i . v_j`` clamped into the model's rating range."""
    if not 0 <= i < model.num_users:
        raise IndexError(f"user index {i} out of range [0, {model.num_users})")
    if not 0 <= j < model.num_items:
        raise IndexError(f"item index {j} out of range [0, {model.num_items})")
    score = float(model.U[:, i] @ model.V[:, j])
    return min(max(score, model.rating_min), model.rating_max)


def _check_dims(data, model):
    if model.num_users != data.num_users or model.num_items != data.num_items:
        raise DimensionMismatchError(
            f"model covers {model.num_users}x{model.num_items}, "
            f"data is {data.num_users}x{data.num_items}"
        )


def objective(data, model, cfg):
    """Regularized sum-of-squared-errors ``E(U, V)``."""
    _check_dims(data, model)
    resid = data.ratings - model.raw_scores(data.users, data.items)
    return (
        0.5 * float(resid @ resid)
        + 0.5 * cfg.lambda_u * float(np.sum(model.U * model.U))
        + 0.5 * cfg.lambda_v * float(np.sum(model.V * model.V))
    )


def grad_u(data, model, cfg, i):
    """Exact gradient of ``E`` with respect to user vector ``u_i``."""
    _check_dims(data, model)
    if not 0 <= i < data.num_users:
        raise IndexError(f"user index {i} out of range")
    sel = data.users == i
    u = model.U[:, i]
    Vj = model.V[:, data.items[sel]]
    resid = data.ratings[sel] - u @ Vj
    return -(Vj @ resid) + cfg.lambda_u * u


def grad_v(data, model, cfg, j):
    """Exact gradient of ``E`` with respect to item vector ``v_j``."""
    _check_dims(data, model)
    if not 0 <= j < data.num_items:
        raise IndexError(f"item index {j} out of range")
    sel = data.items == j
    v = model.V[:, j]
    Ui = model.U[:, data.users[sel]]
    resid = data.ratings[sel] - v @ Ui
    return -(Ui @ resid) + cfg.lambda_v * v


class _SweepKernel:
    """Vectorized full-batch residuals and data-term gradients.

    Works on row-major factor copies (``N x d`` / ``M x d``); the sparse
    residual matrices keep a fixed sparsity pattern and only their data
    arrays are refreshed each sweep.
    """

    def __init__(self, data):
        self.users = data.users
        self.items = data.items
        self.ratings = data.ratings
        n = len(data)
        tag = np.arange(1, n + 1, dtype=np.float64)
        by_user = sp.csr_matrix((tag, (data.users, data.items)), shape=data.shape)
        by_item = sp.csr_matrix((tag, (data.items, data.users)),
                                shape=(data.num_items, data.num_users))
        by_user.sort_indices()
        by_item.sort_indices()
        self._perm_u = by_user.data.astype(np.int64) - 1
        self._perm_v = by_item.data.astype(np.int64) - 1
        self._by_user = by_user
        self._by_item = by_item

    def residuals(self, Ur, Vr):
        return self.ratings - np.einsum("ij,ij->i", Ur[self.users], Vr[self.items])

    def user_pull(self, resid, Vr):
        """``sum_j I_ij e_ij v_j`` for every user (rows)."""
        self._by_user.data = resid[self._perm_u]
        return self._by_user @ Vr

    def item_pull(self, resid, Ur):
        """``sum_i I_ij e_ij u_i`` for every item (rows)."""
        self._by_item.data = resid[self._perm_v]
        return self._by_item @ Ur


def project_rows(Ur):
    """Scale rows with norm above one back onto the unit sphere (in place)."""
    norms = np.linalg.norm(Ur, axis=1)
    big = norms > 1.0
    Ur[big] /= norms[big, None]
    return Ur


def step_size(cfg, n):
    return cfg.gamma / n if cfg.grad_normalization else cfg.gamma


def _check_finite(value, iteration, phase):
    if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
        raise DivergenceError(iteration, value, phase)


def init_model(data, cfg):
    """Independent uniform random unit vectors, keyed by raw entity id."""
    U = random_unit_columns(cfg.d, data.user_ids, cfg.seed, ROLE_USER_INIT)
    V = random_unit_columns(cfg.d, data.item_ids, cfg.seed, ROLE_ITEM_INIT)
    return U, V


def train_pmf(data, cfg, init=None):
    """Phase 1: ``k1`` synchronous full-gradient sweeps over ``E(U, V)``.

    All gradients of a sweep are taken at the previous iterate and applied
    together.  On return every ``||u_i|| <= 1``.

    Raises
    ------
    DivergenceError
        If the objective becomes non-finite or exceeds ``1e12``.
    """
    if len(data) == 0:
        raise ValidationError("cannot train on an empty rating set")
    U, V = init_model(data, cfg) if init is None else (np.array(init[0]), np.array(init[1]))
    Ur = np.ascontiguousarray(U.T)
    Vr = np.ascontiguousarray(V.T)
    kernel = _SweepKernel(data)
    step = step_size(cfg, len(data))
    history = []
    for alpha in range(1, cfg.k1 + 1):
        resid = kernel.residuals(Ur, Vr)
        value = 0.5 * (resid @ resid + cfg.lambda_u * np.sum(Ur * Ur)
                       + cfg.lambda_v * np.sum(Vr * Vr))
        _check_finite(value, alpha, "phase 1")
        history.append(float(value))
        grad_U = cfg.lambda_u * Ur - kernel.user_pull(resid, Vr)
        grad_V = cfg.lambda_v * Vr - kernel.item_pull(resid, Ur)
        Ur -= step * grad_U
        Vr -= step * grad_V
        if cfg.project_each_sweep:
            project_rows(Ur)
    project_rows(Ur)
    resid = kernel.residuals(Ur, Vr)
    value = 0.5 * (resid @ resid + cfg.lambda_u * np.sum(Ur * Ur)
                   + cfg.lambda_v * np.sum(Vr * Vr))
    _check_finite(value, cfg.k1, "phase 1")
    history.append(float(value))
    logger.debug("phase 1 finished: objective %.6g after %d sweeps", value, cfg.k1)
    return FactorModel(
        Ur.T.copy(), Vr.T.copy(), data.rating_min, data.rating_max,
        publishable=("U", "V"), mode="plain", config=cfg.as_dict(), history=history,
    )
