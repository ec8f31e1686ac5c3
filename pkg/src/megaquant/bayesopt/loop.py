"""The budgeted selection loop: Sobol seeding, then alternating EI/Thompson.

One evaluation per iteration, never repeating a configuration. Failed
objective evaluations are recorded and excluded from the surrogate. The
loop can resume from its CSV ledger, replaying previous evaluations
instead of recomputing them.
"""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from ..errors import ConditioningError, ConfigError
from .acquisition import propose_ei, propose_thompson
from .gp import gp_fit
from .space import ConfigSpace

LEDGER_COLUMNS = ("iteration", "kind", "config", "value", "fold_values",
                  "wall_time", "failed")


@dataclass(frozen=True)
class BoBudget:
    max_evaluations: int
    init_design: int = 8
    thompson_candidates: int = 4096
    ei_restarts: int = 10

    def __post_init__(self):
        if self.init_design < 2:
            raise ConfigError("init_design must be >= 2")
        if self.max_evaluations <= self.init_design:
            raise ConfigError("max_evaluations must exceed init_design")


@dataclass
class SelectionResult:
    best_config: Optional[Dict]
    best_value: float
    trace: List[dict] = field(default_factory=list)

    @property
    def n_evaluations(self) -> int:
        return len(self.trace)

    def best_so_far(self) -> List[float]:
        """Nonincreasing curve of the best observed value per evaluation."""
        curve, best = [], np.inf
        for entry in self.trace:
            if not entry["failed"]:
                best = min(best, entry["value"])
            curve.append(best)
        return curve


def _normalise_result(res) -> dict:
    if isinstance(res, dict):
        return {"value": float(res["mean"]),
                "fold_values": [float(v) for v in res.get("folds", [])]}
    return {"value": float(res), "fold_values": []}


def _append_ledger(path, entry):
    exists = os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LEDGER_COLUMNS)
        if not exists:
            writer.writeheader()
        writer.writerow({
            "iteration": entry["iteration"],
            "kind": entry["kind"],
            "config": json.dumps(entry["config"], sort_keys=True),
            "value": "" if entry["failed"] else repr(entry["value"]),
            "fold_values": json.dumps(entry["fold_values"]),
            "wall_time": repr(entry["wall_time"]),
            "failed": int(entry["failed"]),
        })


def load_ledger(path) -> List[dict]:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            failed = bool(int(row["failed"]))
            entries.append({
                "iteration": int(row["iteration"]),
                "kind": row["kind"],
                "config": json.loads(row["config"]),
                "value": np.nan if failed else float(row["value"]),
                "fold_values": json.loads(row["fold_values"]),
                "wall_time": float(row["wall_time"]),
                "failed": failed,
            })
    return entries


def select_model(space: ConfigSpace, objective: Callable[[Dict], object],
                 budget: BoBudget, seed: int = 0,
                 ledger_path: Optional[str] = None,
                 gp_restarts: int = 3) -> SelectionResult:
    """Minimise ``objective`` over ``space`` within the evaluation budget.

    Seeds with ``init_design`` distinct Sobol-decoded configs, then
    alternates EI (even iterations) with Thompson sampling (odd).
    Returns the best evaluated config and the complete trace.
    """
    trace: List[dict] = []
    evaluated = set()
    if ledger_path and os.path.exists(ledger_path):
        for entry in load_ledger(ledger_path):
            trace.append(entry)
            evaluated.add(space.key(entry["config"]))

    seed_seq = np.random.SeedSequence(seed)
    iter_seeds = [int(s.generate_state(1)[0])
                  for s in seed_seq.spawn(budget.max_evaluations + 2)]

    def run(config: Dict, kind: str):
        started = time.perf_counter()
        try:
            result = _normalise_result(objective(config))
            failed = False
        except Exception:
            result = {"value": np.nan, "fold_values": []}
            failed = True
        entry = {"iteration": len(trace), "kind": kind, "config": config,
                 "value": result["value"], "fold_values": result["fold_values"],
                 "wall_time": time.perf_counter() - started, "failed": failed}
        trace.append(entry)
        evaluated.add(space.key(config))
        if ledger_path:
            _append_ledger(ledger_path, entry)

    # Sobol-decoded seeding; duplicates skip to the next sequence point.
    sobol_index = 0
    seeded = sum(1 for e in trace if e["kind"] == "init")
    while (seeded < budget.init_design and len(trace) < budget.max_evaluations
           and len(evaluated) < len(space)):
        config = space.sobol_config(sobol_index)
        sobol_index += 1
        if space.key(config) in evaluated:
            continue
        run(config, "init")
        seeded += 1

    bo_iteration = 0
    while len(trace) < budget.max_evaluations and len(evaluated) < len(space):
        good = [e for e in trace if not e["failed"]]
        iter_seed = iter_seeds[len(trace)]
        if len(good) < 2:
            rng = np.random.Generator(np.random.PCG64(iter_seed))
            config = next((c for c in space.sample_configs(64, rng)
                           if space.key(c) not in evaluated), None)
            if config is None:
                break
            run(config, "random")
            continue
        gp = gp_fit([space.encode(e["config"]) for e in good],
                    [e["value"] for e in good],
                    restarts=gp_restarts, seed=iter_seed)
        try:
            if bo_iteration % 2 == 0:
                config, flagged = propose_ei(gp, space, restarts=budget.ei_restarts,
                                             seed=iter_seed, exclude=evaluated)
                kind = "ei_fallback" if flagged else "ei"
            else:
                config = propose_thompson(gp, space, budget.thompson_candidates,
                                          seed=iter_seed, exclude=evaluated)
                kind = "thompson"
        except ConditioningError:
            break
        run(config, kind)
        bo_iteration += 1

    good = [e for e in trace if not e["failed"]]
    if not good:
        return SelectionResult(None, np.nan, trace)
    best = min(good, key=lambda e: (e["value"], space.key(e["config"])))
    return SelectionResult(best["config"], best["value"], trace)
