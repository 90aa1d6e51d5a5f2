"""Epsilon-MDL model selection over a hyperparameter sweep.

Each candidate config is trained; those whose held-out MSE is below epsilon
get an effective-precision search and a DL measurement at the bits found.
The winner is the qualifying candidate with the smallest entropy DL.
"""
from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .codec import DlReport, dl_report, effective_precision_search
from .sae import SaeConfig, TrainingError, TrainReport, train

WITHIN = "within_tolerance"
EXCEEDED = "exceeded_tolerance"
FAILED = "failed"

THREADS_ENV = "MDL_SAE_THREADS"


@dataclass(frozen=True)
class SweepPlan:
    epsilon: float
    candidates: tuple
    max_parallel: int = 1

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if not self.candidates:
            raise ValueError("a sweep plan needs at least one candidate")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, input_dim: Optional[int] = None) -> "SweepPlan":
        """Build a plan from ``{epsilon, max_parallel, defaults, candidates}``.

        Each candidate entry is merged over ``defaults``; ``input_dim`` fills
        in any config that omits it.
        """
        if not isinstance(d, dict):
            raise ValueError("sweep plan must be a mapping")
        unknown = set(d) - {"epsilon", "max_parallel", "defaults", "candidates"}
        if unknown:
            raise ValueError(f"unknown sweep plan keys: {sorted(unknown)}")
        if "epsilon" not in d or "candidates" not in d:
            raise ValueError("sweep plan needs 'epsilon' and 'candidates'")
        defaults = dict(d.get("defaults") or {})
        configs = []
        for entry in d["candidates"]:
            merged = {**defaults, **entry}
            if input_dim is not None:
                merged.setdefault("input_dim", input_dim)
            configs.append(SaeConfig.from_dict(merged))
        return cls(float(d["epsilon"]), tuple(configs), int(d.get("max_parallel", 1)))

    @classmethod
    def load(cls, path, input_dim: Optional[int] = None) -> "SweepPlan":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(yaml.safe_load(f), input_dim)


@dataclass(frozen=True)
class SweepCandidate:
    config: SaeConfig
    train_report: Optional[TrainReport]
    dl_report: Optional[DlReport]
    status: str
    error: str = ""

    def __post_init__(self):
        if (self.dl_report is not None) != (self.status == WITHIN):
            raise ValueError("dl_report must be present iff status is within_tolerance")


@dataclass(frozen=True)
class MdlSelection:
    winner: Optional[SweepCandidate]
    ranking: tuple


def effective_parallelism(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def evaluate_candidate(config: SaeConfig, epsilon: float, train_data, test_data) -> SweepCandidate:
    try:
        model, report = train(config, train_data, test_data)
    except TrainingError as exc:
        return SweepCandidate(config, None, None, FAILED, str(exc))
    if not report.final_test_mse < epsilon:
        return SweepCandidate(config, report, None, EXCEEDED)
    prec = effective_precision_search(model, test_data, epsilon)
    if not prec.feasible:
        return SweepCandidate(config, report, None, EXCEEDED,
                              f"no precision <= {prec.bits} bits meets epsilon")
    dl = dl_report(model, test_data, prec.bits, prec.mse)
    return SweepCandidate(config, report, dl, WITHIN)


def run_sweep(plan: SweepPlan, train_data, test_data) -> list:
    """Evaluate every candidate; output order follows ``plan.candidates``."""
    train_data = np.asarray(getattr(train_data, "data", train_data), dtype=float)
    test_data = np.asarray(getattr(test_data, "data", test_data), dtype=float)
    for cfg in plan.candidates:
        if cfg.input_dim != train_data.shape[1] or cfg.input_dim != test_data.shape[1]:
            raise ValueError(f"config input_dim={cfg.input_dim} does not match data "
                             f"({train_data.shape[1]}, {test_data.shape[1]})")

    def job(cfg):
        return evaluate_candidate(cfg, plan.epsilon, train_data, test_data)

    workers = effective_parallelism(plan.max_parallel)
    if workers == 1:
        return [job(cfg) for cfg in plan.candidates]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, plan.candidates))


def _config_key(cfg: SaeConfig):
    return tuple(sorted((k, repr(v)) for k, v in cfg.to_dict().items()))


def _selection_key(c: SweepCandidate):
    r = c.dl_report
    return (r.entropy_dl_bits, r.mean_L0, r.dict_size, c.config.seed, _config_key(c.config))


def select_mdl(candidates: Sequence[SweepCandidate]) -> MdlSelection:
    """Minimal entropy DL; ties by lower L0, smaller D, lower seed, then config."""
    ranking = tuple(sorted((c for c in candidates if c.status == WITHIN), key=_selection_key))
    return MdlSelection(ranking[0] if ranking else None, ranking)


PARETO_COLUMNS = ("L0", "D", "alive", "DL", "upper_bound_DL", "MSE", "B", "k",
                  "activation_rule", "seed", "status")


def pareto_table(candidates: Sequence[SweepCandidate]) -> list:
    """One row per candidate sorted by L0 (then D); rows without a DL report last."""
    rows = []
    for c in candidates:
        r = c.dl_report
        if r is not None:
            row = {"L0": r.mean_L0, "D": r.dict_size, "alive": r.alive_features,
                   "DL": r.entropy_dl_bits, "upper_bound_DL": r.upper_bound_dl_bits,
                   "MSE": r.test_mse, "B": r.quant_bits}
        else:
            t = c.train_report
            row = {"L0": t.mean_L0 if t else None, "D": c.config.dict_size,
                   "alive": t.alive_features if t else None, "DL": None,
                   "upper_bound_DL": None, "MSE": t.final_test_mse if t else None,
                   "B": None}
        row.update(k=c.config.k, activation_rule=c.config.activation_rule,
                   seed=c.config.seed, status=c.status)
        rows.append(row)
    rows.sort(key=lambda r: (r["L0"] is None, r["L0"] if r["L0"] is not None else 0.0,
                             r["D"], r["k"], r["seed"]))
    return rows


def candidate_record(index: int, c: SweepCandidate) -> dict:
    rec = {"index": index, "status": c.status, "error": c.error,
           "config": dataclasses.asdict(c.config)}
    rec["train_report"] = c.train_report.record() if c.train_report else None
    rec["dl_report"] = c.dl_report.record() if c.dl_report else None
    return rec
