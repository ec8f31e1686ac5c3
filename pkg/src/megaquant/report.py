"""Evaluation report assembly and rendering.

A report aggregates prediction records from any number of models (the
baselines are just more models): per-metabolite overall MAE with SEM and
normal-approximation confidence intervals, experiment-level error
tables, predicted-vs-truth regression fits, and the pairwise one-tailed
signed-rank matrix with effect sizes. Renders to CSV files, plot-data
files and an aligned text table.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DegenerateDataError, DimensionError
from .evaluation import (PairedTestResult, PredictionRecord, RegressionFit,
                         aggregate_experiment, fit_regression,
                         paired_experiment_diffs, wilcoxon_one_tailed)

CI_Z = 1.96  # 95% two-sided normal quantile


@dataclass(frozen=True)
class MaeSummary:
    model: str
    metabolite: str
    mae: float
    sem: float
    ci_low: float
    ci_high: float
    n: int
    is_minimum: bool = False


@dataclass
class EvalReport:
    metabolites: Tuple[str, ...]
    models: Tuple[str, ...]
    summaries: List[MaeSummary]
    experiment_table: Dict[Tuple[str, str, str], float]
    regressions: Dict[Tuple[str, str], RegressionFit]
    paired_tests: Dict[Tuple[str, str, str], Optional[PairedTestResult]]
    scatter: Dict[Tuple[str, str], np.ndarray]
    metadata: Dict[str, str] = field(default_factory=dict)

    def summary_rows(self) -> List[dict]:
        return [{"model": s.model, "metabolite": s.metabolite,
                 "mae": s.mae, "sem": s.sem, "ci_low": s.ci_low,
                 "ci_high": s.ci_high, "n": s.n, "min": int(s.is_minimum)}
                for s in self.summaries]

    def write_csv(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "summary.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=[
                "model", "metabolite", "mae", "sem", "ci_low", "ci_high", "n", "min"])
            writer.writeheader()
            for row in self.summary_rows():
                writer.writerow(row)
        with open(os.path.join(directory, "experiments.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "metabolite", "experiment", "mean_abs_error"])
            for (model, metabolite, exp), value in sorted(self.experiment_table.items()):
                writer.writerow([model, metabolite, exp, repr(value)])
        with open(os.path.join(directory, "regressions.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "metabolite", "slope", "intercept",
                             "r_squared", "se_slope", "p_value", "n"])
            for (model, metabolite), fit in sorted(self.regressions.items()):
                writer.writerow([model, metabolite, repr(fit.slope), repr(fit.intercept),
                                 repr(fit.r_squared), repr(fit.se_slope),
                                 repr(fit.p_value), fit.n])
        with open(os.path.join(directory, "paired_tests.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metabolite", "model_1", "model_2", "p_value",
                             "wins", "n_experiments", "fraction_lower", "mean_diff",
                             "method"])
            for (metabolite, m1, m2), res in sorted(self.paired_tests.items()):
                if res is None:
                    writer.writerow([metabolite, m1, m2, "", "", "", "", "", "skipped"])
                else:
                    writer.writerow([metabolite, m1, m2, repr(res.p_value), res.wins,
                                     res.n_experiments, repr(res.fraction_lower),
                                     repr(res.mean_diff), res.method])

    def write_plot_data(self, directory: str):
        """Predicted-vs-truth (x, y) pairs, one file per model and metabolite."""
        os.makedirs(directory, exist_ok=True)
        for (model, metabolite), xy in sorted(self.scatter.items()):
            safe = f"scatter_{model}_{metabolite}.csv".replace("/", "_").replace(" ", "_")
            with open(os.path.join(directory, safe), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["truth", "predicted"])
                for x, y in xy:
                    writer.writerow([repr(float(x)), repr(float(y))])

    def to_text(self) -> str:
        lines = []
        width = max(len(m) for m in self.models) + 2
        header = "metabolite".ljust(12) + "".join(m.ljust(width + 18) for m in self.models)
        lines.append(header)
        lines.append("-" * len(header))
        by_key = {(s.model, s.metabolite): s for s in self.summaries}
        for metabolite in self.metabolites:
            cells = []
            for model in self.models:
                s = by_key.get((model, metabolite))
                if s is None:
                    cells.append("-".ljust(width + 18))
                    continue
                flag = "*" if s.is_minimum else " "
                cells.append(f"{s.mae:.4f} +-{s.sem:.4f}{flag}".ljust(width + 18))
            lines.append(metabolite.ljust(12) + "".join(cells))
        lines.append("")
        lines.append("* lowest error per metabolite")
        for key, value in sorted(self.metadata.items()):
            lines.append(f"{key}: {value}")
        return "\n".join(lines)


def build_report(records: Sequence[PredictionRecord],
                 baselines: Sequence[PredictionRecord] = (),
                 min_pairs_for_test: int = 5) -> EvalReport:
    """Assemble the full report; baseline records are additional models."""
    all_records = list(records) + list(baselines)
    if not all_records:
        raise DimensionError("need at least one prediction record")
    metabolites = all_records[0].truth.metabolites or tuple(
        str(i) for i in range(len(all_records[0].truth.values)))
    for rec in all_records:
        if (rec.truth.metabolites or metabolites) != metabolites:
            raise ContractError("inconsistent metabolite orders across records")
    models = tuple(dict.fromkeys(r.model for r in all_records))
    by_model = {m: [r for r in all_records if r.model == m] for m in models}

    summaries: List[MaeSummary] = []
    for metabolite_idx, metabolite in enumerate(metabolites):
        per_model = {}
        for model in models:
            errs = np.array([r.absolute_errors()[metabolite_idx] for r in by_model[model]])
            mae = float(errs.mean())
            sem = float(errs.std(ddof=1) / np.sqrt(len(errs))) if len(errs) > 1 else 0.0
            per_model[model] = (mae, sem, len(errs))
        best = min(v[0] for v in per_model.values())
        for model in models:
            mae, sem, n = per_model[model]
            summaries.append(MaeSummary(model, metabolite, mae, sem,
                                        mae - CI_Z * sem, mae + CI_Z * sem, n,
                                        is_minimum=(mae == best)))

    experiment_table = {}
    for model in models:
        for (exp, metabolite), value in aggregate_experiment(by_model[model]).items():
            experiment_table[(model, metabolite, exp)] = value

    regressions = {}
    scatter = {}
    for model in models:
        for metabolite_idx, metabolite in enumerate(metabolites):
            xy = np.array([(r.truth.values[metabolite_idx],
                            r.predicted.values[metabolite_idx])
                           for r in by_model[model]])
            scatter[(model, metabolite)] = xy
            if len(xy) >= 3 and np.ptp(xy[:, 0]) > 0:
                regressions[(model, metabolite)] = fit_regression(xy)

    paired_tests: Dict[Tuple[str, str, str], Optional[PairedTestResult]] = {}
    for metabolite in metabolites:
        for m1 in models:
            for m2 in models:
                if m1 == m2:
                    continue
                try:
                    diffs = paired_experiment_diffs(by_model[m1], by_model[m2], metabolite)
                    if np.count_nonzero(diffs) < min_pairs_for_test:
                        raise DegenerateDataError("too few informative pairs")
                    paired_tests[(metabolite, m1, m2)] = wilcoxon_one_tailed(
                        diffs, metabolite=metabolite)
                except (ContractError, DegenerateDataError):
                    paired_tests[(metabolite, m1, m2)] = None

    return EvalReport(metabolites, models, summaries, experiment_table,
                      regressions, paired_tests, scatter,
                      metadata={"regression_null": "slope == 0 (two-sided)"})
