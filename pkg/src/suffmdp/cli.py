"""Command-line entry points.

Subcommands: ``simulate`` (sample a synthetic dataset to CSV), ``screen``
(variable screening report), ``construct`` (full feature-construction
pipeline), ``qlearn`` (fit a Q approximator over a stored feature map),
``evaluate`` (Monte Carlo policy value in a generative model), and
``experiment`` (the replicated comparison harness).

Exit codes: 0 on success, 1 on validation errors (bad flags, malformed
inputs), 2 on unexpected runtime failures.  All randomness flows from
``--seed``; outputs carry no timestamps, so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Optional

from . import experiment as experiment_mod
from .adnn import PipelineConfig, construct_sufficient_features, default_grid
from .core import (
    DataValidationError,
    format_float,
    load_dataset_csv,
    save_dataset_csv,
)
from .dcov import InsufficientDataError
from .features import feature_map_from_jsonable
from .qlearn import evaluate_policy, fit_q_linear, fit_q_nn, q_approximator_from_jsonable
from .screening import screen
from .simgen import GenerativeModelSpec, sample_trajectories

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="suffmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a synthetic dataset to CSV")
    p.add_argument("--model", required=True, choices=["linear", "quad", "exp"])
    p.add_argument("--n-noise", type=int, default=0)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--t", type=int, default=90)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("screen", help="variable screening on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--perms", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-stratum", type=int, default=5)
    p.add_argument("--out", default=None)

    p = sub.add_parser("construct", help="construct a reduced feature map")
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--grid-file", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perms", type=int, default=999)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-report", default=None)
    p.add_argument("--out-weights", default=None,
                   help="CSV of first-layer input weights for plotting")

    p = sub.add_parser("qlearn", help="fit a Q approximator over a feature map")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="feature map JSON file")
    p.add_argument("--kind", required=True, choices=["linear", "nn"])
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="Monte Carlo policy value")
    p.add_argument("--gen-spec", required=True, help="generative model JSON file")
    p.add_argument("--model", required=True, help="feature map JSON file")
    p.add_argument("--q", required=True, help="Q approximator JSON file")
    p.add_argument("--rollouts", type=int, default=300)
    p.add_argument("--horizon", type=int, default=90)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--definition", choices=["per_step_mean", "discounted_sum"],
                   default="per_step_mean")
    p.add_argument("--out", default=None)

    p = sub.add_parser("experiment", help="replicated comparison harness")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    return parser


def _write_json(path: Optional[str], payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _load_grid_file(path: Optional[str]):
    """Tuning grid and optional pipeline overrides from a JSON file."""
    if path is None:
        return None, {}
    data = _load_json(path)
    if "cells" in data:
        grid = tuple(tuple(cell) for cell in data["cells"])
    elif {"hidden_widths", "depths", "lams"} & set(data):
        grid = tuple(
            default_grid(
                hidden_widths=data.get("hidden_widths", (2, 4, 8)),
                depths=data.get("depths", (1, 2)),
                lams=data.get("lams", (0.001, 0.01, 0.1, 1.0)),
            )
        )
    else:
        grid = None
    overrides = {
        k: data[k]
        for k in ("dims", "folds", "min_stratum", "col_tol", "activation",
                  "max_iterations", "fit")
        if k in data
    }
    return grid, overrides


def _cmd_simulate(args) -> int:
    spec = GenerativeModelSpec(g_kind=args.model, n_noise=args.n_noise, seed=args.seed)
    ds = sample_trajectories(spec, args.n, args.t, rng=args.seed)
    save_dataset_csv(ds, args.out)
    return 0


def _cmd_screen(args) -> int:
    ds = load_dataset_csv(args.data)
    result = screen(
        ds,
        tau=args.tau,
        n_permutations=args.perms,
        seed=args.seed,
        min_stratum=args.min_stratum,
    )
    _write_json(args.out, result.to_jsonable())
    return 0


def _cmd_construct(args) -> int:
    ds = load_dataset_csv(args.data)
    grid, overrides = _load_grid_file(args.grid_file)
    fit_overrides = overrides.pop("fit", None)
    config = PipelineConfig(
        tau=args.tau,
        grid=grid,
        n_permutations=args.perms,
        seed=args.seed,
        **{k: tuple(v) if k == "dims" else v for k, v in overrides.items()},
    )
    if fit_overrides:
        config = dataclasses.replace(
            config, fit=dataclasses.replace(config.fit, **fit_overrides)
        )
    result = construct_sufficient_features(ds, config)
    if result.feature_map is None:
        _write_json(args.out_report, result.to_jsonable())
        print("screening selected no variables; no model written", file=sys.stderr)
        return 0
    _write_json(args.out_model, result.feature_map.to_jsonable())
    if args.out_report:
        _write_json(args.out_report, result.to_jsonable())
    if args.out_weights:
        _write_weights_csv(args.out_weights, result)
    return 0


def _write_weights_csv(path: str, result) -> None:
    w1 = result.model.first_layer  # (units, inputs)
    with open(path, "w") as fh:
        units = w1.shape[0]
        fh.write("variable," + ",".join(f"w_{u + 1}" for u in range(units)) + "\n")
        for col, var in enumerate(result.variables):
            weights = ",".join(format_float(w1[u, col]) for u in range(units))
            fh.write(f"{var},{weights}\n")


def _cmd_qlearn(args) -> int:
    from .core import flatten_transitions

    ds = load_dataset_csv(args.data)
    fmap = feature_map_from_jsonable(_load_json(args.model))
    transitions = flatten_transitions(ds)
    if args.kind == "linear":
        q = fit_q_linear(transitions, fmap, gamma=args.gamma, epochs=args.epochs,
                         seed=args.seed, n_actions=ds.n_actions)
    else:
        q = fit_q_nn(transitions, fmap, gamma=args.gamma, epochs=args.epochs,
                     seed=args.seed, n_actions=ds.n_actions)
    _write_json(args.out, q.to_jsonable())
    return 0


def _cmd_evaluate(args) -> int:
    spec = GenerativeModelSpec.from_jsonable(_load_json(args.gen_spec))
    fmap = feature_map_from_jsonable(_load_json(args.model))
    q = q_approximator_from_jsonable(_load_json(args.q))
    value = evaluate_policy(
        spec, fmap, q,
        n_rollouts=args.rollouts, horizon=args.horizon,
        seed=args.seed, definition=args.definition,
    )
    _write_json(args.out, value.to_jsonable())
    return 0


def _cmd_experiment(args) -> int:
    cfg = experiment_mod.ExperimentConfig.from_jsonable(_load_json(args.config))
    updates = {}
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.out_csv is not None:
        updates["output_csv"] = args.out_csv
    if args.out_json is not None:
        updates["output_json"] = args.out_json
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    result = experiment_mod.run_experiment(cfg)
    if cfg.output_csv:
        result.write_csv(cfg.output_csv)
    else:
        print(result.to_csv_text(), end="")
    if cfg.output_json:
        result.write_json(cfg.output_json)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "screen": _cmd_screen,
    "construct": _cmd_construct,
    "qlearn": _cmd_qlearn,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (DataValidationError, InsufficientDataError, ValueError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"suffmdp {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"suffmdp {args.command}: unexpected failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
