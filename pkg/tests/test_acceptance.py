"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a single [PASS]/[FAIL] line (visible with ``pytest -s``)
and asserts the criterion. Criteria 3 and 4 train full models and
dominate the suite's runtime; their measured wall time is printed
alongside the stated budget.
"""
import itertools
import json
import os
import time

import numpy as np
import pytest
from scipy.stats import rankdata

from megaquant.bayesopt import (BoBudget, Categorical, ConfigSpace, KernelParams,
                                Ordinal, expected_improvement, gp_fit,
                                select_model)
from megaquant.cli import main as cli_main
from megaquant.evaluation import fit_regression, lls_quantify, wilcoxon_one_tailed
from megaquant.models import YaeConfig, generate_exported, train
from megaquant.models.dataset import max_normalise_rows
from megaquant.nn import (Activation, BatchNorm, Conv2D, Dense, Dropout, Flatten,
                          MaxPool2D, Sequential, huber_loss, huber_loss_grad,
                          kink_margin, max_relative_error, mse_loss, mse_loss_grad)
from megaquant.preprocess import (ExportConfig, align_b0, estimate_b0_shift,
                                  export_input, jain_peak_location,
                                  shift_spectrum)
from megaquant.sobol import sobol_sample
from megaquant.spectra import Fid, PpmAxis, apodize, fft_fid, ifft_spectrum
from megaquant.synthesis import (DEFAULT_PEAK_TABLE, ConcentrationVector,
                                 FixedLinewidth, GridLinewidth, SynthesisConfig,
                                 generate_lorentzian_basis, mix_spectrum,
                                 normalise_peak)

from util import measure_fwhm_hz, single_line_fid

GABA = 2  # canonical metabolite index

EXPORT_512 = ExportConfig(n_points=512, acquisitions=("OFF", "ON"),
                          datatypes=("imaginary", "real"), target_norm="sum")


def report(number, name, passed, detail):
    print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number} ({name}): {detail}",
          flush=True)
    assert passed, f"criterion {number} ({name}): {detail}"


def sim_basis(fwhm):
    return generate_lorentzian_basis(DEFAULT_PEAK_TABLE, fwhm,
                                     PpmAxis(n_points=1024, bandwidth=1250.0))


def gaba_mae(model, data):
    pred = model.predict_max_normalised(data.x)
    truth = max_normalise_rows(data.targets_raw)
    return float(np.abs(pred[:, GABA] - truth[:, GABA]).mean())


def test_criterion_1_lls_oracle_closure():
    started = time.perf_counter()
    basis = sim_basis(2.0)
    cfg = ExportConfig(n_points=512, acquisitions=("OFF", "ON"),
                       datatypes=("real", "imaginary"))
    worst = 0.0
    for i in range(200):
        values = sobol_sample(5, i, 1)
        c = ConcentrationVector(values, basis.metabolites)
        acqs = normalise_peak(mix_spectrum(basis, c, 2.0))
        fitted = lls_quantify(basis, acqs, cfg)
        truth = values / values.max()
        for p, t in zip(fitted.values, truth):
            err = abs(p - t) / t if t > 0 else abs(p)
            worst = max(worst, err)
    elapsed = time.perf_counter() - started
    report(1, "LLS oracle closure",
           worst < 1e-8 and elapsed < 60,
           f"worst per-metabolite relative error {worst:.3g} over 200 "
           f"Sobol mixtures (tolerance 1e-8), runtime {elapsed:.1f}s (< 60s)")


def _gradient_trial(kind, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    if kind == "dense":
        f_in, f_h, f_out = rng.integers(4, 12, 3)
        net = Sequential([Dense(f_in, f_h, rng), Activation("tanh"),
                          Dense(f_h, f_out, rng), Activation("sigmoid")])
        x = rng.standard_normal((n, f_in))
        t = rng.random((n, f_out))
    elif kind == "softmax":
        f_in, f_out = rng.integers(4, 10, 2)
        net = Sequential([Dense(f_in, f_out, rng), Activation("softmax")])
        x = rng.standard_normal((n, f_in))
        t = rng.random((n, f_out))
    elif kind == "dropout":
        f_in, f_h = rng.integers(5, 12, 2)
        net = Sequential([Dense(f_in, f_h, rng), Activation("tanh"),
                          Dropout(float(rng.uniform(0.1, 0.5))), Dense(f_h, 3, rng)])
        x = rng.standard_normal((n, f_in))
        t = rng.random((n, 3))
    elif kind == "batchnorm_dense":
        f_in, f_h = rng.integers(5, 12, 2)
        net = Sequential([Dense(f_in, f_h, rng), BatchNorm(f_h),
                          Activation("tanh"), Dense(f_h, 3, rng)])
        x = rng.standard_normal((n, f_in))
        t = rng.random((n, 3))
    elif kind == "conv_stride":
        w = int(rng.integers(12, 24))
        filters = int(rng.integers(2, 5))
        net = Sequential([Conv2D(1, filters, (1, 5), 2, rng), Activation("tanh"),
                          Flatten(), Dense(filters * 2 * ((w + 1) // 2), 3, rng)])
        x = rng.standard_normal((n, 1, 2, w))
        t = rng.random((n, 3))
    elif kind == "conv_reduce_batchnorm":
        w = int(rng.integers(10, 18))
        filters = int(rng.integers(2, 5))
        net = Sequential([Conv2D(1, filters, (3, 3), 1, rng), BatchNorm(filters),
                          Activation("relu"), Flatten(),
                          Dense(filters * w, 2, rng)])
        x = rng.standard_normal((n, 1, 3, w))
        t = rng.random((n, 2))
    else:  # maxpool with relu
        w = int(rng.integers(12, 24))
        filters = int(rng.integers(2, 4))
        net = Sequential([Conv2D(1, filters, (1, 3), 1, rng), Activation("relu"),
                          MaxPool2D(2), Flatten(),
                          Dense(filters * (w // 2), 3, rng)])
        x = rng.standard_normal((n, 1, 1, w))
        t = rng.random((n, 3))
    return net, x, t


def test_criterion_2_gradient_correctness():
    started = time.perf_counter()
    kinds = ("dense", "softmax", "dropout", "batchnorm_dense", "conv_stride",
             "conv_reduce_batchnorm", "maxpool")
    losses = ((mse_loss, mse_loss_grad), (huber_loss, huber_loss_grad))
    worst = 0.0
    trials = 0
    seed = 0
    while trials < 100:
        kind = kinds[trials % len(kinds)]
        loss, loss_grad = losses[trials % 2]
        seed += 1
        net, x, t = _gradient_trial(kind, seed)
        if kink_margin(net, x) < 1e-3:
            continue  # resample away from relu/pool kinks
        err = max_relative_error(net, x, t, loss, loss_grad,
                                 step=1e-5, coords_per_param=4,
                                 rng=np.random.default_rng(seed))
        worst = max(worst, err)
        trials += 1
    elapsed = time.perf_counter() - started
    report(2, "gradient correctness",
           worst < 1e-4 and elapsed < 120,
           f"worst relative error {worst:.3g} over {trials} randomised trials "
           f"covering every layer kind and both losses (tolerance 1e-4), "
           f"runtime {elapsed:.1f}s (< 120s)")


@pytest.mark.slow
def test_criterion_3_scaled_simulation_benchmark():
    started = time.perf_counter()
    basis = sim_basis(2.0)
    train_data = generate_exported(
        basis, SynthesisConfig(8000, (0.0, 0.03), FixedLinewidth(2.0), 101, 1),
        EXPORT_512)
    val_data = generate_exported(
        basis, SynthesisConfig(2000, (0.0, 0.03), FixedLinewidth(2.0), 101, 8001),
        EXPORT_512)
    cfg = YaeConfig(export=EXPORT_512, batch_size=16)  # the selected architecture
    trained = train(cfg, train_data, epochs=60, seed=2024)
    pred = trained.predict_max_normalised(val_data.x)
    truth = max_normalise_rows(val_data.targets_raw)
    mae = float(np.abs(pred[:, GABA] - truth[:, GABA]).mean())
    fit = fit_regression(np.column_stack([truth[:, GABA], pred[:, GABA]]))
    elapsed = time.perf_counter() - started
    ok = mae <= 0.06 and 0.90 <= fit.slope <= 1.10 and fit.r_squared >= 0.95
    report(3, "scaled simulation benchmark", ok,
           f"validation GABA MAE {mae:.4f} (<= 0.06), slope {fit.slope:.3f} "
           f"(in [0.90, 1.10]), R^2 {fit.r_squared:.4f} (>= 0.95); "
           f"8000 train / 2000 val spectra, 60 epochs; runtime "
           f"{elapsed / 60:.1f} min (desktop-CPU target < 30 min)")


@pytest.mark.slow
def test_criterion_4_linewidth_augmentation_robustness():
    started = time.perf_counter()
    basis = sim_basis(1.0)
    aug_data = generate_exported(
        basis, SynthesisConfig(5000, (0.0, 0.03), GridLinewidth(1.0, 10.0, 0.2),
                               202, 1), EXPORT_512)
    fixed_data = generate_exported(
        basis, SynthesisConfig(5000, (0.0, 0.03), FixedLinewidth(2.0), 203, 1),
        EXPORT_512)
    cfg = YaeConfig(export=EXPORT_512, batch_size=16)
    aug_model = train(cfg, aug_data, epochs=40, seed=77)
    fixed_model = train(cfg, fixed_data, epochs=40, seed=77)
    maes = {}
    for lw in (2.0, 4.0, 8.0):
        eval_data = generate_exported(
            basis, SynthesisConfig(400, (0.0, 0.03), FixedLinewidth(lw),
                                   300 + int(lw), 50001 + 1000 * int(lw)),
            EXPORT_512)
        maes[lw] = (gaba_mae(aug_model, eval_data),
                    gaba_mae(fixed_model, eval_data))
    elapsed = time.perf_counter() - started
    table = ", ".join(f"{lw:g}Hz aug={a:.4f}/fixed={f:.4f}"
                      for lw, (a, f) in maes.items())
    ok = maes[8.0][0] < maes[8.0][1] and elapsed < 3600
    report(4, "linewidth-augmentation robustness", ok,
           f"GABA MAE at held-out linewidths: {table}; augmented must beat "
           f"fixed-2Hz at 8 Hz; runtime {elapsed / 60:.1f} min (< 60 min)")


def test_criterion_5_bo_efficiency():
    started = time.perf_counter()
    space = ConfigSpace([
        Categorical("kernels", ("small", "medium", "large")),
        Categorical("head", ("softmax-stride", "sigmoid-pool")),
        Ordinal("batch_size", (16, 32, 64)),
        Categorical("datatypes", ("real", "imaginary-real")),
    ])
    assert len(space) == 36
    penalty = {"kernels": {"small": 0.012, "medium": 0.0, "large": 0.006},
               "head": {"softmax-stride": 0.030, "sigmoid-pool": 0.0},
               "batch_size": {16: 0.0, 32: 0.008, 64: 0.018},
               "datatypes": {"real": 0.0, "imaginary-real": 0.004}}

    def objective(cfg):
        return 0.05 + sum(penalty[k][v] for k, v in cfg.items())

    optimum = min(space.all_configs(), key=objective)
    budget = BoBudget(max_evaluations=14, init_design=6)  # 40% of 36 configs
    wins = sum(select_model(space, objective, budget, seed=s).best_config == optimum
               for s in range(50))
    elapsed = time.perf_counter() - started
    report(5, "BO efficiency", wins >= 45 and elapsed < 300,
           f"exhaustive-search optimum found in {wins}/50 seeded runs within "
           f"14/36 evaluations (need >= 45); runtime {elapsed:.0f}s (< 300s)")


def test_criterion_6_gp_ei_oracle_equivalence():
    space = ConfigSpace([Ordinal(f"d{i}", (0.0, 1 / 3, 2 / 3, 1.0))
                         for i in range(5)])
    configs = list(space.all_configs())
    assert len(configs) == 1024
    encoded = np.stack([space.encode(c) for c in configs])
    rng = np.random.default_rng(11)
    idx = rng.choice(1024, size=40, replace=False)
    y = 0.1 + 0.5 * rng.random(40)
    params = KernelParams(0.8, np.full(5, 0.6), 1e-6)
    gp = gp_fit(encoded[idx], y, kernel_params=params)

    # independent dense-grid linear-algebra oracle (solve, not the GP class)
    def kern(a, b):
        sq = np.sum(((a[:, None, :] - b[None, :, :]) / params.length_scales) ** 2, axis=2)
        return params.signal_variance * np.exp(-0.5 * sq)

    k = kern(encoded[idx], encoded[idx])
    k[np.diag_indices_from(k)] += params.noise_variance + 1e-8
    ks = kern(encoded[idx], encoded)
    mean0 = ks.T @ np.linalg.solve(k, y)
    var0 = np.maximum(params.signal_variance
                      - np.sum(ks * np.linalg.solve(k, ks), axis=0), 0.0)
    from scipy.stats import norm as normal
    sigma0 = np.sqrt(var0)
    imp = y.min() - mean0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma0 > 0, imp / np.where(sigma0 > 0, sigma0, 1.0), 0.0)
    ei0 = np.where(sigma0 > 0, imp * normal.cdf(z) + sigma0 * normal.pdf(z), 0.0)
    ei0 = np.maximum(ei0, 0.0)

    mean1, var1 = gp.posterior(encoded)
    ei1 = expected_improvement(gp, encoded, float(y.min()))
    worst = max(np.abs(mean0 - mean1).max(), np.abs(var0 - var1).max(),
                np.abs(ei0 - ei1).max())
    report(6, "GP/EI oracle equivalence", worst < 1e-8,
           f"max |posterior mean/variance/EI - oracle| = {worst:.3g} over a "
           f"1024-point config grid (tolerance 1e-8)")


def test_criterion_7_wilcoxon_exactness():
    worst_gap = 0.0
    cases = 0
    for n in range(5, 13):
        for trial in range(3):
            rng = np.random.default_rng(100 * n + trial)
            d = np.round(rng.standard_normal(n), 1)
            d[d == 0.0] = 0.05  # keep n nonzero differences
            res = wilcoxon_one_tailed(d)
            ranks = rankdata(np.abs(d), method="average")
            w_obs = ranks[d > 0].sum()
            count = sum(
                sum(r for s, r in zip(signs, ranks) if s) <= w_obs + 1e-12
                for signs in itertools.product((0, 1), repeat=n))
            exact = count / 2.0 ** n
            worst_gap = max(worst_gap, abs(res.p_value - exact))
            cases += 1
    extreme = wilcoxon_one_tailed(-np.arange(1.0, 15.0))
    extreme_ok = extreme.p_value == pytest.approx(1 / 2 ** 14, abs=0)
    report(7, "Wilcoxon exactness",
           worst_gap == 0.0 and extreme_ok,
           f"implementation p-values equal exhaustive 2^n sign enumeration for "
           f"{cases} cases with n in 5..12 (max gap {worst_gap:.3g}); all-negative "
           f"n=14 gives p = 1/2^14; no phantom data supplied, so the published "
           f"pattern is validated by enumeration only")


def test_criterion_8_preprocessing_contracts():
    checks = {}
    rng = np.random.default_rng(0)
    # FFT round trip
    worst_rt = 0.0
    for n in (2048, 4096):
        fid = Fid(rng.standard_normal(n) + 1j * rng.standard_normal(n), 5e-4)
        back = ifft_spectrum(fft_fid(fid, PpmAxis.for_fid(fid)))
        worst_rt = max(worst_rt, float(np.abs(back.samples - fid.samples).max()))
    checks["fft round trip"] = (worst_rt, worst_rt < 1e-10, "1e-10")

    # apodization width
    fwhm_errs = []
    fid2 = apodize(single_line_fid(2048, 1250.0), 2.0)
    fwhm_errs.append(abs(measure_fwhm_hz(fid2) - 2.0) / 2.0)
    fwhm_errs.append(abs(measure_fwhm_hz(apodize(fid2, 4.0)) - 6.0) / 6.0)
    worst_fwhm = max(fwhm_errs)
    checks["apodization FWHM"] = (worst_fwhm, worst_fwhm < 0.05, "5%")

    # sub-bin peak estimation
    axis = PpmAxis(n_points=512, bandwidth=1000.0)
    worst_jain = 0.0
    for frac in (0.1, 0.3, 0.45, 0.7, 0.9):
        freq = axis.bin0_freq + (100.0 + frac) * axis.freq_step
        spec = fft_fid(single_line_fid(512, 1000.0, freq), axis)
        window = (axis.index_to_ppm(90), axis.index_to_ppm(110))
        worst_jain = max(worst_jain,
                         abs(jain_peak_location(spec, window) - (100.0 + frac)))
    checks["Jain estimator"] = (worst_jain, worst_jain < 0.05, "0.05 bin")

    # B0 alignment residual
    basis = sim_basis(2.0)
    c = ConcentrationVector([0.6, 0.5, 0.4, 0.3, 0.2], basis.metabolites)
    acqs = normalise_peak(mix_spectrum(basis, c, 2.0))
    export_bin_ppm = 3.5 / 2048
    worst_b0 = 0.0
    for delta in (-0.1, -0.05, 0.05, 0.1):
        shifted = acqs.map_values(lambda v, s: shift_spectrum(s, delta).values)
        residual, _ = estimate_b0_shift(align_b0(shifted))
        worst_b0 = max(worst_b0, abs(residual))
    checks["B0 residual"] = (worst_b0, worst_b0 < export_bin_ppm,
                             f"{export_bin_ppm:.2e} ppm (1 bin)")

    # dual-bandwidth harmonisation (wide line keeps interpolation error small)
    table = {"X": [(3.0, 1.0)], "Y": [(2.2, 0.7)]}
    cfg = ExportConfig(n_points=2048, acquisitions=("OFF",), datatypes=("real",))
    exported = {}
    for bw in (1250.0, 2000.0):
        b = generate_lorentzian_basis(table, 8.0, PpmAxis(n_points=2048, bandwidth=bw))
        cc = ConcentrationVector([0.8, 0.5], b.metabolites)
        exported[bw] = export_input(normalise_peak(mix_spectrum(b, cc, 8.0)), cfg).channels
    dual = float(np.abs(exported[1250.0] - exported[2000.0]).max())
    checks["dual-bandwidth export"] = (dual, dual < 0.02, "2% of peak")

    ok = all(passed for _, passed, _ in checks.values())
    detail = "; ".join(f"{name} {value:.3g} (< {tol})"
                       for name, (value, _passed, tol) in checks.items())
    report(8, "preprocessing contracts", ok, detail)


def test_criterion_9_cli_determinism(tmp_path):
    run_cfg = {
        "basis": {"fwhm": 2.0, "axis": {"n_points": 512, "bandwidth": 1250.0}},
        "synthesis": {"n_samples": 16, "noise_sigma_range": [0.0, 0.02],
                      "linewidth": {"mode": "fixed", "fwhm": 2.0},
                      "master_seed": 11, "sobol_skip": 1},
        "export": {"n_points": 128, "acquisitions": ["OFF", "ON"],
                   "datatypes": ["real"], "target_norm": "sum"},
        "model": {"type": "yae", "encoder_depth": 3, "decoder_depth": 3,
                  "quantifier_width": 64, "batch_size": 8},
        "training": {"epochs": 2, "seed": 5},
        "selection": {"max_evaluations": 5, "init_design": 3, "folds": 3,
                      "epochs": 1, "seed": 2},
    }
    space = {"dimensions": [
        {"name": "quantifier_width", "kind": "ordinal", "values": [32, 64]},
        {"name": "encoder_dropout", "kind": "ordinal", "values": [0.0, 0.2]},
    ]}
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(run_cfg))
    (tmp_path / "space.json").write_text(json.dumps(space))

    outputs = {}
    for tag in ("a", "b"):
        data = tmp_path / f"data_{tag}.mqd"
        model = tmp_path / f"model_{tag}.mqck"
        best = tmp_path / f"best_{tag}.json"
        assert cli_main(["generate", "--config", str(cfg), "--out", str(data)]) == 0
        assert cli_main(["train", "--config", str(cfg), "--data", str(data),
                         "--out", str(model)]) == 0
        assert cli_main(["select", "--config", str(cfg),
                         "--space", str(tmp_path / "space.json"),
                         "--data", str(data), "--out", str(best)]) == 0
        outputs[tag] = tuple(p.read_bytes() for p in (data, model, best))
    same = outputs["a"] == outputs["b"]
    report(9, "determinism", same,
           "generate, train and select each produced bit-identical outputs "
           "across two consecutive runs with identical configs and seeds")
