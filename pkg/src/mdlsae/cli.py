"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data or I/O error,
3 training failure. Diagnostics go to stderr only.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import codec, io, sweep, toys
from .ingest import load_dataset
from .sae import SaeConfig, TrainingError, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_CONFIG, f"usage error: {message}")


def _load_yaml(path):
    try:
        with open(path, encoding="utf-8") as f:
            return yaml.safe_load(f)
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise CliError(EXIT_CONFIG, f"malformed config {path}: {exc}".replace("\n", " ")) from exc


def _load_data(path, limit=None):
    if path is None:
        raise CliError(EXIT_CONFIG, "missing data path")
    try:
        return load_dataset(path, limit).data
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"cannot load data {path}: {exc}") from exc


def _parse_grid(text: str, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            grid = np.linspace(float(start), float(stop), int(num))
        else:
            grid = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"bad grid {text!r}: {exc}") from exc
    if grid.size == 0:
        raise CliError(EXIT_CONFIG, f"empty grid {text!r}")
    if np.any(grid < lo) or np.any(grid > hi):
        raise CliError(EXIT_CONFIG, f"grid {text!r} leaves [{lo}, {hi}]")
    return grid


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(io.json_clean(record), allow_nan=False) + "\n")


def cmd_train(args) -> int:
    raw = _load_yaml(args.config)
    if not isinstance(raw, dict):
        raise CliError(EXIT_CONFIG, f"config {args.config} must be a mapping")
    X = _load_data(args.train_data, args.limit_train)
    X_test = _load_data(args.test_data, args.limit_test) if args.test_data else X
    raw = dict(raw)
    raw.setdefault("input_dim", X.shape[1])
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = SaeConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid config: {exc}") from exc
    if config.input_dim != X.shape[1] or X_test.shape[1] != X.shape[1]:
        raise CliError(EXIT_DATA, f"data dimension {X.shape[1]}/{X_test.shape[1]} "
                                  f"!= config input_dim {config.input_dim}")
    try:
        model, report = train(config, X, X_test)
    except TrainingError as exc:
        raise CliError(EXIT_TRAIN, f"training failed: {exc}") from exc
    out = Path(args.out)
    try:
        io.save_checkpoint(model, out)
        io.write_rows(out.with_name(out.name + f".report.{args.format}"),
                      [report.record()], args.format)
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot write {out}: {exc}") from exc
    _emit(report.record())
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = _load_yaml(args.config)
    X = _load_data(args.train_data, args.limit_train)
    X_test = _load_data(args.test_data, args.limit_test)
    if X.shape[1] != X_test.shape[1]:
        raise CliError(EXIT_DATA, f"train dimension {X.shape[1]} != test dimension {X_test.shape[1]}")
    if isinstance(raw, dict):
        raw = dict(raw)
        if args.epsilon is not None:
            raw["epsilon"] = args.epsilon
        if args.max_parallel is not None:
            raw["max_parallel"] = args.max_parallel
        if args.seed is not None:
            raw["defaults"] = {**(raw.get("defaults") or {}), "seed": args.seed}
    try:
        plan = sweep.SweepPlan.from_dict(raw, input_dim=X.shape[1])
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid sweep plan: {exc}") from exc
    try:
        results = sweep.run_sweep(plan, X, X_test)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc
    selection = sweep.select_mdl(results)
    out = Path(args.out)
    winner_index = results.index(selection.winner) if selection.winner else None
    sel = {"epsilon": plan.epsilon, "n_candidates": len(results),
           "n_within_tolerance": len(selection.ranking),
           "winner_index": winner_index,
           "winner": sweep.candidate_record(winner_index, selection.winner)
           if selection.winner else None}
    try:
        out.mkdir(parents=True, exist_ok=True)
        io.write_rows(out / f"pareto.{args.format}", sweep.pareto_table(results),
                      args.format, columns=list(sweep.PARETO_COLUMNS))
        io.write_rows(out / "candidates.jsonl",
                      [sweep.candidate_record(i, c) for i, c in enumerate(results)], "jsonl")
        (out / "selection.json").write_text(
            json.dumps(io.json_clean(sel), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot write reports to {out}: {exc}") from exc
    _emit({"winner_index": winner_index,
           "winner_dl_bits": selection.winner.dl_report.entropy_dl_bits
           if selection.winner else None})
    return EXIT_OK


def cmd_toy(args) -> int:
    try:
        if args.model == "split":
            rows = toys.split_phase_grid(_parse_grid(args.p), _parse_grid(args.rho, -1.0, 1.0))
        else:
            rows = toys.hier_phase_grid(_parse_grid(args.p_a), _parse_grid(args.p_b_given_a))
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"invalid toy parameters: {exc}") from exc
    if not rows:
        raise CliError(EXIT_CONFIG, "grid contains no feasible points")
    try:
        if args.out:
            io.write_rows(args.out, rows, args.format)
        else:
            sys.stdout.write(io.csv_text(rows) if args.format == "csv" else io.jsonl_text(rows))
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot write {args.out}: {exc}") from exc
    return EXIT_OK


def cmd_dl(args) -> int:
    try:
        model = io.load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    X = _load_data(args.test_data, args.limit_test)
    if X.shape[1] != model.n_features_in_:
        raise CliError(EXIT_DATA, f"data dimension {X.shape[1]} != checkpoint "
                                  f"dimension {model.n_features_in_}")
    if args.epsilon is None:
        raise CliError(EXIT_CONFIG, "--epsilon is required")
    base = model.reconstruction_mse(X)
    if base < args.epsilon:
        prec = codec.effective_precision_search(model, X, args.epsilon)
        bits, qmse, feasible = prec.bits, prec.mse, prec.feasible
    else:
        bits, feasible = codec.MAX_BITS, False
        zq, _ = codec.quantize_latents(model.transform(X), bits)
        qmse = float(np.mean((model.inverse_transform(zq) - X) ** 2))
    record = {"status": "feasible" if feasible else "infeasible", "epsilon": args.epsilon}
    record.update(codec.dl_report(model, X, bits, qmse).record())
    if args.out:
        try:
            io.write_rows(args.out, [record], args.format)
        except OSError as exc:
            raise CliError(EXIT_DATA, f"cannot write {args.out}: {exc}") from exc
    _emit(record)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdlsae", description="Train SAEs and select them by description length.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(sp, test=True):
        sp.add_argument("--train-data")
        if test:
            sp.add_argument("--test-data")
        sp.add_argument("--limit-train", type=int)
        sp.add_argument("--limit-test", type=int)

    t = sub.add_parser("train", help="train one SAE and write a checkpoint")
    t.add_argument("--config", required=True)
    data_flags(t)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run a sweep and select the MDL winner")
    s.add_argument("--config", required=True)
    data_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-parallel", type=int)
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    s.set_defaults(func=cmd_sweep)

    y = sub.add_parser("toy", help="phase-diagram grids for the boolean toy models")
    ysub = y.add_subparsers(dest="model", required=True, parser_class=_Parser)
    ys = ysub.add_parser("split")
    ys.add_argument("--p", default="0.5")
    ys.add_argument("--rho", default="0:1:11")
    yh = ysub.add_parser("hier")
    yh.add_argument("--p-a", default="0.01:0.99:99")
    yh.add_argument("--p-b-given-a", default="0.01:0.99:99")
    for sp in (ys, yh):
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        sp.set_defaults(func=cmd_toy)

    d = sub.add_parser("dl", help="measure the description length of a checkpoint")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--test-data", required=True)
    d.add_argument("--limit-test", type=int)
    d.add_argument("--epsilon", type=float)
    d.add_argument("--out")
    d.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    d.set_defaults(func=cmd_dl)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"mdlsae: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
