"""Experiment grids: presets, seeded cells and CSV outputs."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .data import parse_movielens, synth_lowrank, write_id_map
from .exceptions import ValidationError
from .io import atomic_write_text
from .metrics import Mode, crossval_run, default_thresholds
from .pdp import GroupSpecParams, ThresholdPolicy
from .pmf import TrainConfig
from .utils import derive_seed

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("f_c", "eps_m", "t", "epsilon")

SYNTH_SHAPE = dict(n=200, m=150, d=5, density=0.2)

# Parameter tables of the four figures; "series" are (label, spec overrides).
PRESETS = {
    "fig2": dict(
        sweep="f_c", values=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        series=[("PDP-PMF", {})], baseline_epsilon=0.1, kind="rmse",
    ),
    "fig3": dict(
        sweep="f_c", values=[0.54, 0.37, 0.20],
        series=[("PDP-PMF", {})], baseline_epsilon=0.1, kind="cdf",
    ),
    "fig4": dict(
        sweep="eps_m", values=[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        series=[("PDP-PMF1", {"f_c": 0.54}), ("PDP-PMF2", {"f_c": 0.37}),
                ("PDP-PMF3", {"f_c": 0.20})],
        baseline_epsilon=0.1, kind="rmse",
    ),
    "fig5": dict(
        sweep="t", values=[0.6, 0.7, 0.8, 1.0],
        series=[("PDP-PMF", {"f_c": 0.60, "f_m": 0.35, "eps_m": 0.4})],
        baseline_epsilon=None, kind="cdf",
    ),
    "eps": dict(
        sweep="epsilon", values=[0.1, 0.3, 1.0, 3.0],
        series=[("DP-PMF", {})], baseline_epsilon=None, kind="rmse",
    ),
}


@dataclass
class ExperimentPlan:
    """One experiment grid: sweep values x series x replications x folds."""

    dataset: str = "synth"
    format: str = "tsv"
    sweep: str = "f_c"
    values: list = field(default_factory=lambda: [0.54])
    series: list = field(default_factory=lambda: [("PDP-PMF", {})])
    baseline_epsilon: float | None = 0.1
    kind: str = "rmse"
    spec: GroupSpecParams = field(default_factory=GroupSpecParams)
    threshold: str = "mean"
    config: TrainConfig = field(default_factory=TrainConfig)
    seeds: int = 5
    folds: int = 10
    seed: int = 42
    out: str = "results"
    jobs: int = 1
    preset: str | None = None

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ValidationError(f"sweep must be one of {SWEEP_VARIABLES}")
        if self.seeds < 1 or self.folds < 2:
            raise ValidationError("need seeds >= 1 and folds >= 2")
        self.values = [float(v) for v in self.values]
        for label, overrides in self.series:
            for v in self.values:
                self.mode_for(label, overrides, v)  # validates every cell up front

    def mode_for(self, label, overrides, value):
        if self.sweep == "epsilon":
            if value <= 0:
                raise ValidationError("epsilon values must be positive")
            return Mode("dp", epsilon=value, label=label)
        spec = replace(self.spec, **overrides)
        policy = ThresholdPolicy.parse(self.threshold)
        if self.sweep == "f_c":
            spec = replace(spec, f_c=value)
        elif self.sweep == "eps_m":
            spec = replace(spec, eps_m=value)
        else:
            if not spec.eps_c <= value <= spec.eps_l:
                raise ValidationError(f"threshold {value} outside [{spec.eps_c}, {spec.eps_l}]")
            policy = ThresholdPolicy("fixed", value)
        return Mode("pdp", spec=spec, policy=policy, label=label)

    def cells(self):
        """``(label, sweep_value, mode)`` in a fixed order; baseline first per value."""
        out = []
        for v in self.values:
            if self.baseline_epsilon is not None:
                out.append(("DP-PMF", v, Mode("dp", epsilon=self.baseline_epsilon,
                                              label="DP-PMF")))
            for label, overrides in self.series:
                out.append((label, v, self.mode_for(label, overrides, v)))
        return out

    def describe(self):
        """Everything that determines the results (not where or how fast)."""
        d = asdict(self)
        del d["out"], d["jobs"]
        d["series"] = [[label, overrides] for label, overrides in self.series]
        return d


def plan_from_preset(name, **overrides):
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ExperimentPlan(preset=name, **{**preset, **overrides})


def load_dataset(dataset, fmt="tsv", seed=0):
    if dataset == "synth":
        data, _ = synth_lowrank(seed=seed, **SYNTH_SHAPE)
        return data
    return parse_movielens(dataset, fmt)


def _cell_name(label, value, rep):
    return f"{label}__{value:g}__rep{rep}"


def _run_cell(data, mode, cfg, folds, seed, thresholds):
    try:
        return crossval_run(data, mode, cfg, folds=folds, seed=seed, thresholds=thresholds)
    except Exception as exc:  # reported per cell; the grid keeps going
        return exc


def run_plan(plan):
    """Execute the whole grid and write per-cell reports plus summaries.

    Returns
    -------
    summary : list of dict
        One row per (sweep value, series) with mean and std RMSE across
        replications.
    failures : list of (cell name, message)
    """
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(plan.dataset, plan.format, plan.seed)
    write_id_map(data, out / "id_map.csv")
    thresholds = default_thresholds(data.rating_max)
    header = f"# plan: {json.dumps(plan.describe(), sort_keys=True)}"

    jobs = [
        (label, value, rep, mode)
        for rep in range(plan.seeds)
        for label, value, mode in plan.cells()
    ]
    # the sweep value is not part of the key: every value and the baseline
    # see the same folds, initializations and noise streams, so a mode that
    # does not depend on the value (the baseline) is computed once per rep
    unique = list(dict.fromkeys((mode, rep) for _, _, rep, mode in jobs))
    computed = Parallel(n_jobs=plan.jobs)(
        delayed(_run_cell)(data, mode, plan.config, plan.folds,
                           derive_seed(plan.seed, rep), thresholds)
        for mode, rep in unique
    )
    by_cell = dict(zip(unique, computed))
    results = [copy.deepcopy(by_cell[(mode, rep)]) for _, _, rep, mode in jobs]

    failures, by_key = [], {}
    cells_dir = out / "cells"
    for (label, value, rep, mode), res in zip(jobs, results):
        name = _cell_name(label, value, rep)
        if isinstance(res, Exception):
            failures.append((name, f"{type(res).__name__}: {res}"))
            logger.error("cell %s failed: %s", name, res)
            continue
        res.config_echo.update(sweep=plan.sweep, sweep_value=value, replication=rep)
        res.write(cells_dir / f"{name}.csv", cells_dir / f"{name}.folds.csv")
        by_key.setdefault((value, label), []).append(res)

    summary = []
    rmse_lines = [header, "sweep_value,mode,mean_rmse,std_rmse"]
    cdf_lines = [header, "sweep_value,mode,threshold,fraction"]
    seen = []
    for label, value, _ in plan.cells():
        if (value, label) in seen or (value, label) not in by_key:
            continue
        seen.append((value, label))
        reports = by_key[(value, label)]
        rm = [r.rmse for r in reports]
        std = float(np.std(rm, ddof=1)) if len(rm) > 1 else 0.0
        summary.append(dict(sweep_value=value, mode=label, mean_rmse=float(np.mean(rm)),
                            std_rmse=std, reports=reports))
        rmse_lines.append(f"{value!r},{label},{float(np.mean(rm))!r},{std!r}")
        frac = np.mean([[f for _, f in r.cdf] for r in reports], axis=0)
        cdf_lines += [f"{value!r},{label},{x!r},{float(f)!r}" for x, f in zip(thresholds, frac)]
    atomic_write_text(out / "summary.csv", "\n".join(rmse_lines) + "\n")
    atomic_write_text(out / "cdf.csv", "\n".join(cdf_lines) + "\n")
    if failures:
        atomic_write_text(out / "failures.csv", "cell,error\n" + "".join(
            f"{name},{json.dumps(msg)}\n" for name, msg in failures))
    return summary, failures
