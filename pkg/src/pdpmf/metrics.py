"""RMSE, error CDF and k-fold cross validation of the three schemes."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import split_folds
from .dp import run_dp_pmf, run_plain_pmf
from .exceptions import ValidationError
from .io import atomic_write_text
from .pdp import GroupSpecParams, ThresholdPolicy, generate_spec, run_pdp_pmf
from .utils import ROLE_CELL, ROLE_SPEC, ROLE_SPLIT, derive_seed

logger = logging.getLogger(__name__)


def _errors(model, test):
    if len(test) == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    return model.predict_many(test.users, test.items) - test.ratings


def rmse(model, test):
    """Root mean squared error of clamped predictions over ``test``."""
    err = _errors(model, test)
    return float(np.sqrt(np.mean(err * err)))


def default_thresholds(rating_max, step=0.1):
    count = int(round(rating_max / step))
    return [round(k * step, 10) for k in range(count + 1)]


def error_cdf(model, test, thresholds):
    """Fraction of test ratings with ``|prediction - rating| <= x`` per threshold."""
    th = np.asarray(thresholds, dtype=float)
    if th.size and (np.any(np.diff(th) < 0) or th[0] < 0 or th[-1] > model.rating_max):
        raise ValidationError(
            f"thresholds must be ascending within [0, {model.rating_max}]"
        )
    abs_err = np.sort(np.abs(_errors(model, test)))
    counts = np.searchsorted(abs_err, th, side="right")
    return [(float(x), float(c) / len(abs_err)) for x, c in zip(th, counts)]


@dataclass(frozen=True)
class Mode:
    """Training scheme for cross validation: ``plain``, ``dp`` or ``pdp``."""

    kind: str = "plain"
    epsilon: float | None = None
    spec: GroupSpecParams | None = None
    policy: ThresholdPolicy | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in ("plain", "dp", "pdp"):
            raise ValidationError(f"unknown mode {self.kind!r}")
        if self.kind == "dp" and self.epsilon is None:
            raise ValidationError("dp mode needs an epsilon")
        if self.kind == "pdp":
            if self.spec is None:
                object.__setattr__(self, "spec", GroupSpecParams())
            if self.policy is None:
                object.__setattr__(self, "policy", ThresholdPolicy())

    @property
    def name(self):
        if self.label:
            return self.label
        return {"plain": "PMF", "dp": "DP-PMF", "pdp": "PDP-PMF"}[self.kind]

    def describe(self):
        out = {"mode": self.kind, "label": self.name}
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        if self.spec is not None:
            out.update(f_c=self.spec.f_c, f_m=self.spec.f_m, eps_c=self.spec.eps_c,
                       eps_m=self.spec.eps_m, eps_l=self.spec.eps_l)
        if self.policy is not None:
            out["threshold_policy"] = str(self.policy)
        return out


def train(train_data, mode, cfg, spec_seed=0):
    """Fit one model of the given scheme on ``train_data``."""
    if mode.kind == "plain":
        return run_plain_pmf(train_data, cfg)
    if mode.kind == "dp":
        return run_dp_pmf(train_data, mode.epsilon, cfg)
    spec = generate_spec(train_data, replace(mode.spec, seed=spec_seed))
    return run_pdp_pmf(train_data, spec, mode.policy, cfg)


@dataclass
class EvalReport:
    """Fold-averaged RMSE and error CDF, with per-fold detail retained.

    ``rmse`` is the unweighted mean of per-fold RMSEs; ``fold_sse`` and
    ``fold_n`` allow any other aggregation to be recomputed.
    """

    rmse: float
    cdf: list
    n_test: int
    config_echo: dict
    fold_rmse: list = field(default_factory=list)
    fold_sse: list = field(default_factory=list)
    fold_n: list = field(default_factory=list)
    fold_cdf: list = field(default_factory=list)
    fold_threshold: list = field(default_factory=list)

    @property
    def rmse_std(self):
        return float(np.std(self.fold_rmse, ddof=1)) if len(self.fold_rmse) > 1 else 0.0

    def cdf_at(self, x):
        for threshold, fraction in self.cdf:
            if abs(threshold - x) < 1e-9:
                return fraction
        raise KeyError(f"no CDF point at {x}")

    def pooled_rmse(self):
        return float(np.sqrt(sum(self.fold_sse) / sum(self.fold_n)))

    def to_csv(self):
        lines = [f"# config: {json.dumps(self.config_echo, sort_keys=True)}",
                 "metric,value",
                 f"rmse,{self.rmse!r}",
                 f"rmse_std,{self.rmse_std!r}",
                 f"n_test,{self.n_test}",
                 f"folds,{len(self.fold_rmse)}",
                 "predictions_clamped,true",
                 "",
                 "threshold,fraction"]
        lines += [f"{x!r},{f!r}" for x, f in self.cdf]
        return "\n".join(lines) + "\n"

    def folds_csv(self):
        lines = [f"# config: {json.dumps(self.config_echo, sort_keys=True)}",
                 "fold,n_test,sse,rmse,threshold"]
        for k, (n, sse, r) in enumerate(zip(self.fold_n, self.fold_sse, self.fold_rmse)):
            t = repr(self.fold_threshold[k]) if k < len(self.fold_threshold) else ""
            lines.append(f"{k},{n},{sse!r},{r!r},{t}")
        return "\n".join(lines) + "\n"

    def write(self, path, detail_path=None):
        atomic_write_text(path, self.to_csv())
        if detail_path is not None:
            atomic_write_text(detail_path, self.folds_csv())


def crossval_run(data, mode, cfg, folds=10, seed=0, thresholds=None, split=None,
                 fold_indices=None):
    """Train on ``folds - 1`` parts and test on the held-out part, per fold.

    Randomness is derived from ``seed`` per fold (training seed and
    privacy-spec seed), and the fold split from ``seed`` alone unless a
    ``split`` is supplied, so different modes run on identical folds.
    """
    if folds < 2:
        raise ValidationError("cross validation needs at least 2 folds")
    if split is None:
        split = split_folds(data, folds, derive_seed(seed, ROLE_SPLIT))
    if thresholds is None:
        thresholds = default_thresholds(data.rating_max)
    report = EvalReport(0.0, [], 0, {})
    fold_indices = range(split.fold_count) if fold_indices is None else fold_indices
    for fold in fold_indices:
        train_mask, test_mask = split.train_test(fold)
        train_data, test_data = data.subset(train_mask), data.subset(test_mask)
        fold_cfg = cfg.replace(seed=derive_seed(seed, ROLE_CELL, fold))
        model = train(train_data, mode, fold_cfg, derive_seed(seed, ROLE_SPEC, fold))
        err = _errors(model, test_data)
        sse = float(err @ err)
        report.fold_sse.append(sse)
        report.fold_n.append(len(test_data))
        report.fold_rmse.append(float(np.sqrt(sse / len(test_data))))
        report.fold_cdf.append(error_cdf(model, test_data, thresholds))
        if "threshold" in model.config:
            report.fold_threshold.append(model.config["threshold"])
        logger.info("%s fold %d: rmse=%.4f", mode.name, fold, report.fold_rmse[-1])
    report.rmse = float(np.mean(report.fold_rmse))
    report.n_test = int(sum(report.fold_n))
    fractions = np.mean([[f for _, f in c] for c in report.fold_cdf], axis=0)
    report.cdf = [(float(x), float(f)) for x, f in zip(thresholds, fractions)]
    report.config_echo = {**cfg.as_dict(), **mode.describe(), "folds": folds,
                          "master_seed": seed, "predictions_clamped": True}
    return report
