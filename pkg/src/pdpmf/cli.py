"""``pdpmf`` command line: run experiment grids, train, export, generate specs."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .data import write_id_map
from .exceptions import PDPMFError, PrivacyPolicyError
from .experiment import PRESETS, ExperimentPlan, load_dataset, plan_from_preset, run_plan
from .io import export_public, read_model, write_model
from .metrics import Mode, train
from .pdp import GroupSpecParams, ThresholdPolicy, generate_spec, read_spec_csv, run_pdp_pmf, write_spec_csv
from .pmf import TrainConfig

OUTPUT_ENV = "PDPMF_OUTPUT_DIR"

log = logging.getLogger("pdpmf")

_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}
_SPEC_KEYS = ("f_c", "f_m", "eps_c", "eps_m", "eps_l")
_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise PDPMFError(f"{path}:{lineno}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(key, value):
    if not isinstance(value, str):
        return value
    if key == "values":
        return [float(v) for v in value.replace(",", " ").split()]
    if key in ("grad_normalization", "project_each_sweep"):
        return _BOOL[value.lower()]
    if key in ("d", "k1", "k2", "seeds", "folds", "seed", "jobs"):
        return int(value)
    if key in ("gamma", "lambda_u", "lambda_v", "baseline_epsilon", "epsilon") + _SPEC_KEYS:
        return float(value)
    return value


def _add_train_options(p):
    g = p.add_argument_group("training")
    g.add_argument("--d", type=int)
    g.add_argument("--gamma", type=float)
    g.add_argument("--lambda-u", type=float)
    g.add_argument("--lambda-v", type=float)
    g.add_argument("--k1", type=int)
    g.add_argument("--k2", type=int)
    g.add_argument("--grad-normalization", choices=sorted(_BOOL))
    g.add_argument("--project-each-sweep", choices=sorted(_BOOL))
    g.add_argument("--sensitivity", choices=["add_remove", "modify"])
    g.add_argument("--noise-mode", choices=["fixed_objective", "per_iteration"])
    s = p.add_argument_group("privacy specification")
    for key in _SPEC_KEYS:
        s.add_argument(f"--{key.replace('_', '-')}", type=float)
    s.add_argument("--threshold", help="mean, max or a fixed value")


def build_parser():
    parser = argparse.ArgumentParser(prog="pdpmf", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pdpmf {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment grid")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--config", help="flat key=value file (overridden by flags)")
    run.add_argument("--dataset", help="ratings file, or 'synth'")
    run.add_argument("--format", choices=["tsv", "dcolon"])
    run.add_argument("--out")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--seeds", type=int, help="replications per grid point")
    run.add_argument("--folds", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--sweep", choices=["f_c", "eps_m", "t", "epsilon"])
    run.add_argument("--values", help="comma separated sweep values")
    run.add_argument("--baseline-epsilon", type=float)
    _add_train_options(run)

    tr = sub.add_parser("train", help="train one model and save it (full, internal)")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--format", default="tsv", choices=["tsv", "dcolon"])
    tr.add_argument("--mode", default="pdp", choices=["plain", "dp", "pdp"])
    tr.add_argument("--epsilon", type=float, default=0.1, help="dp mode budget")
    tr.add_argument("--spec-file", help="user,item,epsilon CSV for pdp mode")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    _add_train_options(tr)

    ex = sub.add_parser("export", help="write the publishable part of a model")
    ex.add_argument("--model", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--include-user-profiles", action="store_true",
                    help="also export U (refused for dp/pdp models)")

    sg = sub.add_parser("spec-gen", help="emit a generated privacy specification CSV")
    sg.add_argument("--dataset", required=True)
    sg.add_argument("--format", default="tsv", choices=["tsv", "dcolon"])
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--out", required=True)
    for key in _SPEC_KEYS:
        sg.add_argument(f"--{key.replace('_', '-')}", type=float)
    return parser


def _cli_values(args):
    return {k: v for k, v in vars(args).items()
            if v is not None and k not in ("command", "verbose", "config")}


def resolve_plan(args):
    """Merge preset defaults < config file < command line into a plan."""
    merged = {}
    if args.config:
        merged.update(read_config_file(args.config))
    merged.update(_cli_values(args))
    merged = {k: _coerce(k, v) for k, v in merged.items()}
    preset = merged.pop("preset", None)

    train_kw = {k: merged.pop(k) for k in list(merged) if k in _TRAIN_KEYS and k != "seed"}
    spec_kw = {k: merged.pop(k) for k in list(merged) if k in _SPEC_KEYS}
    merged.setdefault("out", os.environ.get(OUTPUT_ENV, "results"))
    plan_kw = {k: v for k, v in merged.items()
               if k in {f.name for f in fields(ExperimentPlan)}}
    unknown = set(merged) - set(plan_kw)
    if unknown:
        raise PDPMFError(f"unknown configuration keys: {sorted(unknown)}")
    plan = plan_from_preset(preset, **plan_kw) if preset else ExperimentPlan(**plan_kw)
    if train_kw:
        plan.config = replace(plan.config, **train_kw)
    if spec_kw:
        plan.spec = replace(plan.spec, **spec_kw)
        plan.__post_init__()
    return plan


def _train_config(args, seed):
    kw = {k: _coerce(k, v) for k, v in _cli_values(args).items()
          if k in _TRAIN_KEYS and k != "seed"}
    return TrainConfig(seed=seed, **kw)


def cmd_run(args):
    plan = resolve_plan(args)
    log.info("running plan -> %s", plan.out)
    summary, failures = run_plan(plan)
    for row in summary:
        print(f"{row['sweep_value']:g}\t{row['mode']}\t{row['mean_rmse']:.4f}\t{row['std_rmse']:.4f}")
    if failures:
        for name, msg in failures:
            print(f"FAILED {name}: {msg}", file=sys.stderr)
        return 1
    return 0


def cmd_train(args):
    data = load_dataset(args.dataset, args.format, args.seed)
    cfg = _train_config(args, args.seed)
    spec_kw = {k: getattr(args, k) for k in _SPEC_KEYS if getattr(args, k) is not None}
    policy = ThresholdPolicy.parse(args.threshold or "mean")
    if args.mode == "pdp" and args.spec_file:
        spec = read_spec_csv(args.spec_file, data)
        model = run_pdp_pmf(data, spec, policy, cfg)
    else:
        mode = Mode(args.mode, epsilon=args.epsilon if args.mode == "dp" else None,
                    spec=GroupSpecParams(**spec_kw) if args.mode == "pdp" else None,
                    policy=policy if args.mode == "pdp" else None)
        model = train(data, mode, cfg, spec_seed=args.seed)
    write_model(model, args.out)
    write_id_map(data, Path(args.out).with_suffix(".ids.csv"))
    print(f"wrote {args.mode} model to {args.out}")
    return 0


def cmd_export(args):
    model = read_model(args.model)
    try:
        blocks = export_public(model, args.out, args.include_user_profiles)
    except PrivacyPolicyError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    print(f"exported {'+'.join(blocks)} to {args.out}")
    return 0


def cmd_spec_gen(args):
    data = load_dataset(args.dataset, args.format, args.seed)
    spec_kw = {k: getattr(args, k) for k in _SPEC_KEYS if getattr(args, k) is not None}
    params = GroupSpecParams(seed=args.seed, **spec_kw)
    spec = generate_spec(data, params)
    write_spec_csv(data, spec, args.out, header_lines=[
        f"params: f_c={params.f_c} f_m={params.f_m} eps_c={params.eps_c} "
        f"eps_m={params.eps_m} eps_l={params.eps_l} seed={params.seed}",
    ])
    print(f"wrote {len(spec)} budgets to {args.out} (mean {spec.epsilons.mean():.4f})")
    return 0


COMMANDS = {"run": cmd_run, "train": cmd_train, "export": cmd_export, "spec-gen": cmd_spec_gen}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (PDPMFError, OSError) as exc:
        print(f"pdpmf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
