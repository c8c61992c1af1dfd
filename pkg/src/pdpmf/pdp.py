"""Personalized budgets via per-rating subsampling before uniform DP-PMF.

Each rating with budget ``eps_ij`` below the threshold ``t`` survives with
probability ``(exp(eps_ij) - 1) / (exp(t) - 1)``; the survivors are fed to
the uniform ``t``-DP scheme.  Ratings with ``eps_ij >= t`` always survive.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .dp import run_dp_pmf
from .exceptions import SpecificationCoverageError, ValidationError
from .utils import ROLE_SAMPLE, ROLE_SPEC, check_fraction, stream

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1.0


@dataclass(frozen=True, eq=False)
class PrivacySpecification:
    """Budgets aligned entry-for-entry with a ``SparseRatings`` instance.

    Unrated (user, item) pairs carry no budget at all.  ``groups`` holds the
    privacy level each budget was drawn from (0 conservative, 1 moderate,
    2 liberal) when the spec was generated; externally loaded specs use -1.
    """

    epsilons: np.ndarray
    default_epsilon: float = DEFAULT_EPSILON
    groups: np.ndarray | None = None

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float).reshape(-1)
        if eps.size and (not np.all(np.isfinite(eps)) or eps.min() <= 0):
            raise ValidationError("every privacy budget must be a finite positive real")
        eps.setflags(write=False)
        object.__setattr__(self, "epsilons", eps)

    def __len__(self):
        return len(self.epsilons)

    def subset(self, mask_or_index):
        sel = np.asarray(mask_or_index)
        groups = None if self.groups is None else np.asarray(self.groups)[sel]
        return PrivacySpecification(self.epsilons[sel], self.default_epsilon, groups)


@dataclass(frozen=True)
class GroupSpecParams:
    """Three-level privacy mix: conservative, moderate and liberal records."""

    f_c: float = 0.54
    f_m: float = 0.37
    eps_c: float = 0.1
    eps_m: float = 0.2
    eps_l: float = 1.0
    seed: int = 0

    def __post_init__(self):
        check_fraction("f_c", self.f_c)
        check_fraction("f_m", self.f_m)
        if self.f_c + self.f_m > 1 + 1e-12:
            raise ValidationError(f"f_c + f_m = {self.f_c + self.f_m} exceeds 1")
        if not 0 < self.eps_c < self.eps_m < self.eps_l:
            raise ValidationError("require 0 < eps_c < eps_m < eps_l")

    @property
    def f_l(self):
        return max(0.0, 1.0 - self.f_c - self.f_m)

    def expected_mean(self):
        return (
            self.f_c * 0.5 * (self.eps_c + self.eps_m)
            + self.f_m * 0.5 * (self.eps_m + self.eps_l)
            + self.f_l * self.eps_l
        )


@dataclass(frozen=True)
class ThresholdPolicy:
    """How the sampling threshold ``t`` is chosen: ``max``, ``mean`` or ``fixed``."""

    policy: str = "mean"
    value: float | None = None

    def __post_init__(self):
        if self.policy not in ("max", "mean", "fixed"):
            raise ValidationError(f"unknown threshold policy {self.policy!r}")
        if (self.policy == "fixed") != (self.value is not None):
            raise ValidationError("a value is required for, and only for, the fixed policy")

    @classmethod
    def parse(cls, text):
        """``"max"``, ``"mean"`` or a number (fixed threshold)."""
        text = str(text).strip()
        if text in ("max", "mean"):
            return cls(text)
        return cls("fixed", float(text))

    def __str__(self):
        return self.policy if self.value is None else f"fixed({self.value:g})"


def generate_spec(data, p):
    """Assign each rating a level independently, then a budget within it."""
    n = len(data)
    rng = stream(p.seed, ROLE_SPEC)
    level = rng.random(n)
    draw = rng.random(n)
    groups = np.where(level < p.f_c, 0, np.where(level < p.f_c + p.f_m, 1, 2))
    eps = np.where(
        groups == 0,
        p.eps_c + (p.eps_m - p.eps_c) * draw,
        np.where(groups == 1, p.eps_m + (p.eps_l - p.eps_m) * draw, p.eps_l),
    )
    # half-open ranges: a draw can round up onto the upper breakpoint
    eps = np.where((groups == 0) & (eps >= p.eps_m), np.nextafter(p.eps_m, 0), eps)
    eps = np.where((groups == 1) & (eps >= p.eps_l), np.nextafter(p.eps_l, 0), eps)
    return PrivacySpecification(eps, DEFAULT_EPSILON, groups)


def resolve_threshold(spec, policy):
    """Resolve ``t`` within ``[min eps_ij, max eps_ij]``."""
    if len(spec) == 0:
        raise ValidationError("cannot resolve a threshold from an empty specification")
    lo, hi = float(spec.epsilons.min()), float(spec.epsilons.max())
    if policy.policy == "max":
        return hi
    if policy.policy == "mean":
        # the float mean can stray an ulp outside [lo, hi] for constant specs
        return min(max(float(spec.epsilons.mean()), lo), hi)
    t = float(policy.value)
    if not lo <= t <= hi:
        raise ValidationError(
            f"fixed threshold {t} outside the budget range [{lo}, {hi}]"
        )
    return t


def keep_probability(epsilons, t):
    """Survival probability of each rating; exactly 1 where ``eps >= t``."""
    eps = np.asarray(epsilons, dtype=float)
    below = eps < t
    prob = np.ones_like(eps)
    prob[below] = np.expm1(eps[below]) / np.expm1(t)
    return prob


def sample_ratings(data, spec, t, seed):
    """Bernoulli subsample of ``data``; dropped ratings become unobserved.

    Returns
    -------
    sampled : SparseRatings
    kept : ndarray of bool
        Entry mask into ``data``.
    """
    if len(spec) != len(data):
        raise SpecificationCoverageError(
            f"specification covers {len(spec)} ratings, data has {len(data)}"
        )
    if len(spec):
        lo, hi = float(spec.epsilons.min()), float(spec.epsilons.max())
        if not lo <= t <= hi:
            raise ValidationError(f"threshold {t} outside [{lo}, {hi}]")
    prob = keep_probability(spec.epsilons, t)
    u = stream(seed, ROLE_SAMPLE).random(len(data))
    kept = u < prob
    return data.subset(kept), kept


def run_pdp_pmf(data, spec, policy, cfg):
    """Personalized scheme: subsample with threshold ``t``, then ``t``-DP PMF.

    Phase 1 also trains on the subsample, so dropped ratings never touch
    ``U`` either.
    """
    t = resolve_threshold(spec, policy)
    sampled, kept = sample_ratings(data, spec, t, cfg.seed)
    logger.info("pdp-pmf: threshold t=%.6g (%s), kept %d of %d ratings",
                t, policy, kept.sum(), len(data))
    model = run_dp_pmf(sampled, t, cfg)
    model.mode = "pdp"
    model.config.update(
        mode="pdp", threshold=t, threshold_policy=str(policy),
        n_train=len(data), n_sampled=int(kept.sum()),
    )
    return model


def read_spec_csv(path, data):
    """Load ``user,item,epsilon`` rows (raw ids) aligned to ``data`` entries."""
    lookup = {}
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user", "item", "epsilon"]:
            raise ValidationError("privacy spec CSV must start with header user,item,epsilon")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValidationError(f"spec line {lineno}: expected 3 fields")
            lookup[(int(row[0]), int(row[1]))] = float(row[2])
    eps = np.empty(len(data))
    for k, (u, i) in enumerate(zip(data.users, data.items)):
        key = (int(data.user_ids[u]), int(data.item_ids[i]))
        if key not in lookup:
            raise SpecificationCoverageError(f"no budget for rating (user={key[0]}, item={key[1]})")
        eps[k] = lookup[key]
    return PrivacySpecification(eps, DEFAULT_EPSILON, np.full(len(data), -1))


def write_spec_csv(data, spec, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["user", "item", "epsilon"])
        for u, i, e in zip(data.users, data.items, spec.epsilons):
            w.writerow([int(data.user_ids[u]), int(data.item_ids[i]), repr(float(e))])


__all__ = [
    "PrivacySpecification", "GroupSpecParams", "ThresholdPolicy", "generate_spec",
    "resolve_threshold", "keep_probability", "sample_ratings", "run_pdp_pmf",
    "read_spec_csv", "write_spec_csv",
]
