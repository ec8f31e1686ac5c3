"""Ground-truth scoring: errors, regression indices, paired tests, LLS baseline.

All concentration scoring happens in max-normalised space regardless of
the normalisation used in training. The paired test treats one
experiment series as the statistical unit: per-spectrum absolute errors
are averaged within each experiment first, and the signed-rank test
runs on those experiment-level means.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps
from scipy.optimize import nnls

from .errors import (ConditioningError, ContractError, DegenerateDataError,
                     DimensionError, DomainError)
from .preprocess import ExportConfig, ModelInput, TargetVector, crop_resample
from .spectra import AcquisitionSet, compute_diff
from .synthesis import BasisSet, ConcentrationVector

EXACT_ENUMERATION_LIMIT = 25


@dataclass(frozen=True)
class PredictionRecord:
    """One quantified spectrum: prediction vs truth, tagged by experiment."""

    spectrum_id: str
    experiment_id: str
    predicted: TargetVector
    truth: TargetVector
    model: str

    def __post_init__(self):
        if len(self.predicted.values) != len(self.truth.values):
            raise DimensionError("prediction and truth lengths differ")
        if (self.predicted.metabolites and self.truth.metabolites
                and self.predicted.metabolites != self.truth.metabolites):
            raise ContractError("prediction and truth metabolite orders differ")

    def absolute_errors(self) -> np.ndarray:
        return np.abs(self.predicted.values - self.truth.values)


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    se_slope: float
    p_value: float
    n: int


@dataclass(frozen=True)
class PairedTestResult:
    """One-tailed signed-rank outcome plus effect sizes."""

    metabolite: str
    p_value: float
    wins: int
    n_experiments: int
    mean_diff: float
    fraction_lower: float
    statistic: float
    method: str


def spectral_mae(clean, reconstructed) -> float:
    """Mean absolute deviation across all channels and frequency bins."""
    a = clean.channels if isinstance(clean, ModelInput) else np.asarray(clean)
    b = reconstructed.channels if isinstance(reconstructed, ModelInput) else np.asarray(reconstructed)
    if a.shape != b.shape:
        raise DimensionError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def concentration_mae(pred: TargetVector, truth: TargetVector) -> float:
    """Mean absolute error over max-normalised concentrations."""
    if pred.norm_mode != "max" or truth.norm_mode != "max":
        raise ContractError(
            f"concentration MAE is defined on max-normalised vectors, got "
            f"{pred.norm_mode}/{truth.norm_mode}")
    if len(pred.values) != len(truth.values):
        raise DimensionError("vector lengths differ")
    return float(np.mean(np.abs(pred.values - truth.values)))


def fit_regression(pairs: Sequence[Tuple[float, float]]) -> RegressionFit:
    """Ordinary least squares of predicted on truth with slope inference.

    The p-value is two-sided for slope != 0 from the t distribution
    with n - 2 degrees of freedom.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise DimensionError("need at least 3 (truth, predicted) pairs")
    x, y = arr[:, 0], arr[:, 1]
    n = len(x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise DegenerateDataError("zero truth variance, regression undefined")
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (slope * x + intercept)
    ssr = float(np.sum(residuals ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if sst == 0.0 else 1.0 - ssr / sst
    se_slope = float(np.sqrt(ssr / (n - 2) / sxx))
    if se_slope == 0.0:
        p_value = 0.0
    else:
        t = slope / se_slope
        p_value = float(2.0 * sps.t.sf(abs(t), n - 2))
    return RegressionFit(slope, intercept, r_squared, se_slope, p_value, n)


def aggregate_experiment(records: Sequence[PredictionRecord]) -> Dict[Tuple[str, str], float]:
    """Mean per-spectrum absolute error within each (experiment, metabolite)."""
    if not records:
        return {}
    metabolites = records[0].truth.metabolites or tuple(
        str(i) for i in range(len(records[0].truth.values)))
    sums: Dict[str, np.ndarray] = {}
    counts: Dict[str, int] = {}
    for rec in records:
        err = rec.absolute_errors()
        sums[rec.experiment_id] = sums.get(rec.experiment_id, 0.0) + err
        counts[rec.experiment_id] = counts.get(rec.experiment_id, 0) + 1
    out = {}
    for exp, total in sums.items():
        mean = total / counts[exp]
        for m, name in enumerate(metabolites):
            out[(exp, name)] = float(mean[m])
    return out


def _exact_signed_rank_p(ranks2: np.ndarray, w2_observed: int) -> float:
    """P(W+ <= observed) by subset-sum counting over doubled ranks."""
    total = int(ranks2.sum())
    ways = np.zeros(total + 1, dtype=np.float64)
    ways[0] = 1.0
    for r in ranks2:
        r = int(r)
        new = ways.copy()
        new[r:] += ways[:total + 1 - r]
        ways = new
    return float(ways[:w2_observed + 1].sum() / 2.0 ** len(ranks2))


def wilcoxon_one_tailed(diffs: Sequence[float], metabolite: str = "",
                        alternative: str = "less",
                        exact_limit: int = EXACT_ENUMERATION_LIMIT) -> PairedTestResult:
    """Paired one-tailed Wilcoxon signed-rank test on experiment-level diffs.

    ``alternative='less'`` tests whether the first model's errors are
    systematically lower (negative differences). Zero differences are
    dropped; ties get average ranks. The null distribution is exact by
    enumeration up to ``exact_limit`` non-zero differences, then a
    normal approximation with tie correction and continuity correction.
    """
    if alternative not in ("less", "greater"):
        raise DomainError("alternative must be 'less' or 'greater'")
    d = np.asarray(diffs, dtype=np.float64)
    n_experiments = len(d)
    wins = int(np.sum(d < 0)) if alternative == "less" else int(np.sum(d > 0))
    mean_diff = float(d.mean()) if n_experiments else 0.0
    if alternative == "greater":
        d = -d
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        raise DegenerateDataError("all paired differences are zero")
    if n < 5:
        raise DegenerateDataError(f"need >= 5 non-zero differences, got {n}")
    ranks = sps.rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_limit:
        ranks2 = np.rint(2.0 * ranks).astype(int)
        p = _exact_signed_rank_p(ranks2, int(round(2.0 * w_plus)))
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        z = (w_plus + 0.5 - mean) / np.sqrt(var)
        p = float(sps.norm.cdf(z))
        method = "normal"
    p = min(max(p, np.nextafter(0, 1)), 1.0)
    return PairedTestResult(metabolite, p, wins, n_experiments, mean_diff,
                            wins / n_experiments if n_experiments else 0.0,
                            w_plus, method)


def paired_experiment_diffs(records_a: Sequence[PredictionRecord],
                            records_b: Sequence[PredictionRecord],
                            metabolite: str) -> np.ndarray:
    """Experiment-aligned differences of per-experiment mean errors (a - b)."""
    agg_a = aggregate_experiment(records_a)
    agg_b = aggregate_experiment(records_b)
    exps_a = sorted({e for e, m in agg_a if m == metabolite})
    exps_b = sorted({e for e, m in agg_b if m == metabolite})
    if exps_a != exps_b:
        raise ContractError("models were evaluated on different experiment sets")
    return np.array([agg_a[(e, metabolite)] - agg_b[(e, metabolite)] for e in exps_a])


def _export_channels_common_scale(acqs: AcquisitionSet, cfg: ExportConfig) -> np.ndarray:
    """Stacked channel vector with cropping but no per-set normalisation.

    The least-squares fit needs sample and basis in one linear frame;
    per-spectrum amplitude normalisation would distort the relative
    basis scales, so it is skipped here. Any overall scale cancels in
    the max-normalised coefficients.
    """
    rows = []
    for acq in cfg.acquisitions:
        spec = acqs.get(acq)
        if spec is None:
            raise DimensionError(f"acquisition {acq} missing for the LLS fit")
        cropped = crop_resample(spec, cfg.ppm_band, cfg.n_points)
        for datatype in cfg.datatypes:
            if datatype == "real":
                rows.append(cropped.values.real)
            elif datatype == "imaginary":
                rows.append(cropped.values.imag)
            else:
                rows.append(np.abs(cropped.values))
    return np.concatenate(rows)


def lls_quantify(basis: BasisSet, acqs: AcquisitionSet,
                 cfg: Optional[ExportConfig] = None,
                 condition_limit: float = 1e12) -> ConcentrationVector:
    """Non-negative least-squares fit of exported channels against the basis.

    Magnitude channels break the linearity this fit relies on; real and
    imaginary channels recover noise-free mixtures exactly.
    """
    cfg = cfg or ExportConfig(acquisitions=("OFF", "ON"), datatypes=("real", "imaginary"))
    columns = []
    for name in basis.metabolites:
        off = basis.spectrum(name, "OFF")
        on = basis.spectrum(name, "ON")
        member = AcquisitionSet(off=off, on=on, diff=compute_diff(off, on))
        columns.append(_export_channels_common_scale(member, cfg))
    a = np.stack(columns, axis=1)
    b = _export_channels_common_scale(acqs, cfg)
    condition = float(np.linalg.cond(a))
    if not np.isfinite(condition) or condition > condition_limit:
        raise ConditioningError(
            f"basis design matrix condition number {condition:.3g}",
            condition=condition)
    coeffs, _residual = nnls(a, b)
    peak = coeffs.max()
    if peak > 0:
        coeffs = coeffs / peak
    return ConcentrationVector(np.clip(coeffs, 0.0, 1.0), basis.metabolites)
