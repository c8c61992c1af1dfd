"""Scikit-learn compatible recommenders wrapping the three training schemes.

``fit`` accepts either a :class:`~pdpmf.data.SparseRatings` or the usual
``(X, y)`` pair with ``X`` an ``(n, 2)`` integer array of (user, item)
indices and ``y`` the ratings.  ``predict`` returns clamped ratings and
``score`` the negated RMSE, so model selection utilities maximize it.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .data import SparseRatings
from .dp import run_dp_pmf, run_plain_pmf
from .pdp import (
    GroupSpecParams,
    PrivacySpecification,
    ThresholdPolicy,
    generate_spec,
    run_pdp_pmf,
)
from .pmf import TrainConfig


def check_ratings(X, y=None, n_users=None, n_items=None, rating_range=(1.0, 5.0)):
    """Coerce estimator input into ``SparseRatings``."""
    if isinstance(X, SparseRatings):
        return X
    X = check_array(X, dtype=np.int64, ensure_min_samples=1)
    if X.shape[1] != 2:
        raise ValueError(f"X must have 2 columns (user, item), got {X.shape[1]}")
    if y is None:
        raise ValueError("ratings y are required when X is an index array")
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
    if len(y) != len(X):
        raise ValueError("X and y have inconsistent lengths")
    n_users = int(X[:, 0].max()) + 1 if n_users is None else n_users
    n_items = int(X[:, 1].max()) + 1 if n_items is None else n_items
    return SparseRatings(n_users, n_items, X[:, 0], X[:, 1], y, *rating_range)


def _pairs(X):
    if isinstance(X, SparseRatings):
        return X.users, X.items
    X = check_array(X, dtype=np.int64)
    return X[:, 0], X[:, 1]


class PMFRecommender(BaseEstimator):
    """Non-private PMF trained by full-batch gradient descent.

    Parameters
    ----------
    n_factors : int, default=20
    learning_rate : float, default=50.0
        Step ``gamma``; divided by the number of ratings when
        ``grad_normalization`` is on.
    lambda_u, lambda_v : float, default=0.01
    n_iter : int, default=50
        Joint descent sweeps over ``U`` and ``V`` (phase 1).
    n_iter_items : int, default=50
        Item-only sweeps with ``U`` fixed (phase 2).
    grad_normalization, project_each_sweep : bool, default=True
    n_users, n_items : int, optional
        Matrix size when fitting from index arrays; inferred otherwise.
    rating_range : tuple, default=(1.0, 5.0)
    random_state : int, default=0
    """

    _mode = "plain"

    def __init__(self, n_factors=20, learning_rate=50.0, lambda_u=0.01, lambda_v=0.01,
                 n_iter=50, n_iter_items=50, grad_normalization=True,
                 project_each_sweep=True, n_users=None, n_items=None,
                 rating_range=(1.0, 5.0), random_state=0):
        self.n_factors = n_factors
        self.learning_rate = learning_rate
        self.lambda_u = lambda_u
        self.lambda_v = lambda_v
        self.n_iter = n_iter
        self.n_iter_items = n_iter_items
        self.grad_normalization = grad_normalization
        self.project_each_sweep = project_each_sweep
        self.n_users = n_users
        self.n_items = n_items
        self.rating_range = rating_range
        self.random_state = random_state

    def _config(self, **extra):
        return TrainConfig(
            d=self.n_factors, gamma=self.learning_rate, lambda_u=self.lambda_u,
            lambda_v=self.lambda_v, k1=self.n_iter, k2=self.n_iter_items,
            seed=self.random_state, grad_normalization=self.grad_normalization,
            project_each_sweep=self.project_each_sweep, **extra,
        )

    def _train(self, data):
        return run_plain_pmf(data, self._config())

    def fit(self, X, y=None):
        data = check_ratings(X, y, self.n_users, self.n_items, tuple(self.rating_range))
        self.model_ = self._train(data)
        self.n_users_, self.n_items_ = data.shape
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        users, items = _pairs(X)
        return self.model_.predict_many(users, items)

    def score(self, X, y=None):
        """Negative RMSE (higher is better)."""
        if isinstance(X, SparseRatings):
            y = X.ratings
        pred = self.predict(X)
        return -float(np.sqrt(np.mean((pred - np.asarray(y, dtype=float)) ** 2)))

    @property
    def item_profiles_(self):
        check_is_fitted(self, "model_")
        return self.model_.V

    @property
    def user_profiles_(self):
        check_is_fitted(self, "model_")
        return self.model_.U


class DPPMFRecommender(PMFRecommender):
    """Uniform ``epsilon``-DP PMF via objective perturbation of ``V``.

    ``user_profiles_`` remain available in-process for prediction but the
    model is flagged V-only for export.
    """

    _mode = "dp"

    def __init__(self, epsilon=0.1, sensitivity="add_remove", noise_mode="fixed_objective",
                 n_factors=20, learning_rate=50.0, lambda_u=0.01, lambda_v=0.01,
                 n_iter=50, n_iter_items=50, grad_normalization=True,
                 project_each_sweep=True, n_users=None, n_items=None,
                 rating_range=(1.0, 5.0), random_state=0):
        super().__init__(n_factors, learning_rate, lambda_u, lambda_v, n_iter,
                         n_iter_items, grad_normalization, project_each_sweep,
                         n_users, n_items, rating_range, random_state)
        self.epsilon = epsilon
        self.sensitivity = sensitivity
        self.noise_mode = noise_mode

    def _train(self, data):
        cfg = self._config(sensitivity=self.sensitivity, noise_mode=self.noise_mode)
        return run_dp_pmf(data, self.epsilon, cfg)


class PDPPMFRecommender(PMFRecommender):
    """Personalized-DP PMF: budget-dependent subsampling, then ``t``-DP PMF.

    Per-rating budgets come from ``privacy_spec`` (aligned with the
    training ratings) or, if that is None, are generated from the three
    privacy levels ``f_c``/``f_m`` with ranges ``eps_c < eps_m < eps_l``.
    ``threshold`` is ``"mean"``, ``"max"`` or a number.
    """

    _mode = "pdp"

    def __init__(self, f_c=0.54, f_m=0.37, eps_c=0.1, eps_m=0.2, eps_l=1.0,
                 threshold="mean", privacy_spec=None, sensitivity="add_remove",
                 noise_mode="fixed_objective", n_factors=20, learning_rate=50.0,
                 lambda_u=0.01, lambda_v=0.01, n_iter=50, n_iter_items=50,
                 grad_normalization=True, project_each_sweep=True, n_users=None,
                 n_items=None, rating_range=(1.0, 5.0), random_state=0):
        super().__init__(n_factors, learning_rate, lambda_u, lambda_v, n_iter,
                         n_iter_items, grad_normalization, project_each_sweep,
                         n_users, n_items, rating_range, random_state)
        self.f_c = f_c
        self.f_m = f_m
        self.eps_c = eps_c
        self.eps_m = eps_m
        self.eps_l = eps_l
        self.threshold = threshold
        self.privacy_spec = privacy_spec
        self.sensitivity = sensitivity
        self.noise_mode = noise_mode

    def _train(self, data):
        if self.privacy_spec is None:
            params = GroupSpecParams(self.f_c, self.f_m, self.eps_c, self.eps_m,
                                     self.eps_l, seed=self.random_state)
            spec = generate_spec(data, params)
        elif isinstance(self.privacy_spec, PrivacySpecification):
            spec = self.privacy_spec
        else:
            spec = PrivacySpecification(self.privacy_spec)
        self.privacy_spec_ = spec
        cfg = self._config(sensitivity=self.sensitivity, noise_mode=self.noise_mode)
        model = run_pdp_pmf(data, spec, ThresholdPolicy.parse(self.threshold), cfg)
        self.threshold_ = model.config["threshold"]
        return model
