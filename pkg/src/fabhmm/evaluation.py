"""Held-out evaluation and model-selection experiments."""
import csv
import dataclasses
import io as _io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .baselines import sweep_bic, total_loglik
from .core import KINDS, SequenceSet
from .data import gen_synthetic
from .exceptions import FabHmmError
from .fab import FitConfig, fit_fab
from .io import load_dataset, write_json

METHODS = ("fab", "em-bic")
CSV_FIELDS = ("method", "kind", "length", "trial", "seed", "selected_k", "pll", "wall_time_s", "converged")


def predictive_loglik(params, test):
    """Per-symbol natural-log likelihood of ``test`` under ``params``."""
    if test.kind != params.kind:
        raise ValueError(f"test data kind {test.kind!r} does not match model kind {params.kind!r}")
    return total_loglik(params, test) / test.total_length


@dataclass
class ExperimentPlan:
    kind: str
    lengths: List[int]
    trials: int = 10
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    k_max: int = 10
    test_length: int = 5000
    time_limit: Optional[float] = None
    configs: Dict[str, dict] = field(default_factory=dict)
    dataset: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        self.lengths = [int(n) for n in self.lengths]
        if not self.lengths or any(n < 1 for n in self.lengths):
            raise ValueError("lengths must be a non-empty list of positive integers")
        if self.lengths != sorted(self.lengths):
            raise ValueError("lengths must be sorted ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}")
        if self.dataset is not None and "train" not in self.dataset:
            raise ValueError("dataset needs a 'train' path")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown plan fields: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def fit_config(self, method, seed):
        opts = dict(self.configs.get(method, {}))
        opts.setdefault("k_max", self.k_max)
        opts.setdefault("time_limit", self.time_limit)
        return FitConfig(seed=seed, **opts)


def _seed(plan_seed, *key):
    return int(np.random.SeedSequence(plan_seed, spawn_key=key).generate_state(1)[0])


def data_seed(plan_seed, length, trial):
    return _seed(plan_seed, 0, length, trial)


def fit_seed(plan_seed, method, length, trial):
    return _seed(plan_seed, 1, METHODS.index(method), length, trial)


@dataclass
class ExperimentReport:
    rows: List[dict]
    cells: List[dict]
    plan: dict
    seed: int

    def to_csv(self, timing=True):
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([
                r["method"], r["kind"], r["length"], r["trial"], r["seed"],
                "" if r["selected_k"] is None else r["selected_k"],
                "" if r["pll"] is None else repr(r["pll"]),
                repr(r["wall_time_s"]) if timing and r["wall_time_s"] is not None else "",
                "true" if r["converged"] else "false",
            ])
        return buf.getvalue()

    def to_dict(self, timing=True):
        rows = self.rows if timing else [dict(r, wall_time_s=None) for r in self.rows]
        cells = self.cells if timing else [
            {k: v for k, v in c.items() if not k.startswith("wall_time")} for c in self.cells]
        return {"seed": self.seed, "plan": self.plan, "rows": rows, "cells": cells}


def summarize(rows):
    """Per (method, length) means and population standard deviations."""
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["length"]), []).append(r)
    cells = []
    for (method, length), rs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1])):
        ok = [r for r in rs if r["status"] == "ok"]
        cell = {"method": method, "length": length, "n_rows": len(rs), "n_ok": len(ok),
                "n_converged": sum(r["converged"] for r in ok)}
        for key in ("selected_k", "pll", "wall_time_s"):
            vals = np.array([r[key] for r in ok if r[key] is not None], dtype=float)
            cell[f"{key}_mean"] = float(vals.mean()) if vals.size else None
            cell[f"{key}_std"] = float(vals.std()) if vals.size else None
        cells.append(cell)
    return cells


def _load_plan_data(plan):
    train = load_dataset(plan.dataset["train"])
    test = load_dataset(plan.dataset["test"]) if plan.dataset.get("test") else None
    for d in (train, test):
        if d is not None and d.kind != plan.kind:
            raise ValueError(f"dataset kind {d.kind!r} does not match plan kind {plan.kind!r}")
    return train, test


def _truncate(data, length):
    seq = data.sequences[0][:length]
    return SequenceSet(data.kind, [seq] + data.sequences[1:], alphabet=data.alphabet, n_symbols=data.n_symbols)


def _run_cell(plan, plan_seed, method, length, trial, loaded):
    seed = fit_seed(plan_seed, method, length, trial)
    row = {"method": method, "kind": plan.kind, "length": length, "trial": trial, "seed": seed,
           "selected_k": None, "pll": None, "wall_time_s": None, "converged": False,
           "status": "ok", "error": None}
    try:
        if loaded is None:
            train, test = gen_synthetic(plan.kind, length, data_seed(plan_seed, length, trial),
                                        test_length=plan.test_length)
        else:
            train, test = _truncate(loaded[0], length), loaded[1]
        config = plan.fit_config(method, seed)
        t0 = time.perf_counter()
        if method == "fab":
            report = fit_fab(train, config)
            params, converged = report.params, report.converged
        else:
            sweep = sweep_bic(train, config.k_max, config)
            params, converged = sweep.best_params, sweep.converged
        row["wall_time_s"] = time.perf_counter() - t0
        row["selected_k"] = int(params.n_states)
        row["converged"] = bool(converged)
        if test is not None:
            row["pll"] = float(predictive_loglik(params, test))
    except (FabHmmError, ValueError, FloatingPointError) as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_experiment(plan, out_path=None, seed=0, n_jobs=1, timing=True):
    """Run every (method, length, trial) cell of ``plan``.

    Training and test data for a (length, trial) pair are shared by all
    methods.  Seeds derive from ``(seed, method, length, trial)``, so results
    do not depend on ``n_jobs``.  When ``out_path`` is given, ``report.csv``
    and ``report.json`` are written there.
    """
    if isinstance(plan, dict):
        plan = ExperimentPlan.from_dict(plan)
    loaded = _load_plan_data(plan) if plan.dataset is not None else None
    jobs = [(m, n, t) for m in plan.methods for n in plan.lengths for t in range(plan.trials)]
    run = lambda job: _run_cell(plan, seed, *job, loaded)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    rows.sort(key=lambda r: (METHODS.index(r["method"]), r["length"], r["trial"]))
    report = ExperimentReport(rows, summarize(rows), plan.to_dict(), seed)
    if out_path is not None:
        os.makedirs(out_path, exist_ok=True)
        with open(os.path.join(out_path, "report.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv(timing))
        write_json(os.path.join(out_path, "report.json"), report.to_dict(timing))
    return report
