"""Command-line surface orchestrating the generate/train/select/evaluate flows.

Exit codes: 0 success, 1 configuration or usage failure, 2 runtime
failure. Logs go to stderr; results go only to the declared output
paths. All randomness is governed by --seed (falling back to the seeds
in the run config), and --threads (default from MEGAQUANT_THREADS) caps
worker parallelism.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import archive, runconfig
from .bayesopt import BoBudget, select_model
from .errors import ConfigError, MegaquantError
from .evaluation import PredictionRecord, lls_quantify, spectral_mae
from .models import (TrainedModel, build_cnn, build_yae, cross_validate,
                     export_labelled, train)
from .models.dataset import max_normalise_rows
from .models.training import default_selection_epochs
from .preprocess import TargetVector
from .report import build_report
from .synthesis import generate_dataset

log = logging.getLogger("megaquant")


def _thread_default() -> int:
    try:
        return max(1, int(os.environ.get("MEGAQUANT_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="megaquant",
        description="Metabolite quantification laboratory for edited MRS")
    parser.add_argument("--threads", type=int, default=_thread_default(),
                        help="worker process cap (default: MEGAQUANT_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override every seed in the run config")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis-synth", help="write a synthetic basis archive")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="generate a labelled dataset archive")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a dataset archive")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", dest="log_path", default=None,
                   help="training-log CSV (default: <out>.log.csv)")

    p = sub.add_parser("select", help="Bayesian model selection over a space")
    p.add_argument("--config", required=True)
    p.add_argument("--space", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ledger", default=None, help="evaluation ledger CSV (resumable)")
    p.add_argument("--budget", type=int, default=None,
                   help="override selection.max_evaluations")

    p = sub.add_parser("evaluate", help="score a trained model against ground truth")
    p.add_argument("--config", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--label", default=None, help="model tag in the records")

    p = sub.add_parser("compare", help="statistical comparison of record files")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("lls-fit", help="least-squares baseline quantification")
    p.add_argument("--basis", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="optional CSV of fitted concentrations")
    return parser


def _load_config(path: str, seed_override: Optional[int]) -> dict:
    cfg = runconfig.load_run_config(path)
    if seed_override is not None:
        cfg.setdefault("synthesis", {})
        cfg.setdefault("training", {})
        cfg.setdefault("selection", {})
        cfg["synthesis"]["master_seed"] = seed_override
        cfg["training"]["seed"] = seed_override
        cfg["selection"]["seed"] = seed_override
        if "n_samples" not in cfg["synthesis"]:
            cfg["synthesis"]["n_samples"] = 0
        runconfig.validate_run_config(cfg)
    return cfg


def cmd_basis_synth(args) -> int:
    cfg = _load_config(args.config, args.seed)
    basis = runconfig.basis_from_config(cfg.get("basis", {}))
    archive.save_basis(args.out, basis, stamp=runconfig.make_stamp(cfg, args.seed))
    log.info("wrote basis archive %s (%d metabolites)", args.out, basis.n_metabolites)
    return 0


def cmd_generate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if "synthesis" not in cfg:
        raise ConfigError("generate needs a synthesis section")
    basis = runconfig.basis_from_config(cfg.get("basis", {}))
    synth = runconfig.synthesis_from_config(cfg["synthesis"], args.seed)
    dataset = generate_dataset(basis, synth, workers=args.threads)
    archive.save_dataset(args.out, dataset,
                         stamp=runconfig.make_stamp(cfg, synth.master_seed))
    log.info("wrote dataset archive %s (%d samples)", args.out, len(dataset))
    return 0


def _split_validation(n: int, fraction: float, seed: int):
    if fraction <= 0 or n < 2:
        return np.arange(n), np.array([], dtype=int)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(97,))))
    perm = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    return perm[n_val:], perm[:n_val]


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.seed)
    for section in ("model", "training"):
        if section not in cfg:
            raise ConfigError(f"train needs a {section} section")
    export = runconfig.export_from_config(cfg.get("export", {}))
    model_cfg = runconfig.model_from_config(cfg["model"], export)
    dataset, _manifest = archive.load_dataset(args.data)
    data = export_labelled(dataset, model_cfg.export,
                           **_pipeline_flags(cfg))
    seed = cfg["training"].get("seed", 0)
    train_idx, val_idx = _split_validation(
        len(data), cfg["training"].get("validation_fraction", 0.0), seed)
    val_data = data.subset(val_idx) if len(val_idx) else None
    trained = train(model_cfg, data.subset(train_idx), cfg["training"]["epochs"],
                    seed=seed, val_data=val_data)
    stamp = runconfig.make_stamp(cfg, seed)
    archive.save_model(args.out, trained.arch,
                       runconfig.model_config_to_dict(model_cfg),
                       trained.params(), trained.training_log, seed, stamp=stamp)
    log_path = args.log_path or args.out + ".log.csv"
    _write_training_log(log_path, trained.training_log, stamp)
    log.info("wrote checkpoint %s and training log %s", args.out, log_path)
    return 0


def _write_training_log(path: str, entries: List[dict], stamp: dict):
    keys = sorted({k for e in entries for k in e})
    with open(path, "w", newline="") as fh:
        fh.write(f"# megaquant-stamp {json.dumps(stamp, sort_keys=True)}\n")
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for entry in entries:
            writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for k, v in entry.items()})


def _pipeline_flags(cfg: dict) -> dict:
    section = cfg.get("evaluation", {})
    return {"water": section.get("water", False), "align": section.get("align", True)}


def cmd_select(args) -> int:
    cfg = _load_config(args.config, args.seed)
    for section in ("model", "selection"):
        if section not in cfg:
            raise ConfigError(f"select needs a {section} section")
    with open(args.space) as fh:
        space_cfg = json.load(fh)
    space = runconfig.space_from_config(space_cfg)
    export = runconfig.export_from_config(cfg.get("export", {}))
    template = runconfig.model_from_config(cfg["model"], export)
    dataset, _manifest = archive.load_dataset(args.data)
    selection = cfg["selection"]
    seed = selection.get("seed", 0)
    budget = BoBudget(
        max_evaluations=args.budget or selection.get("max_evaluations", 30),
        init_design=selection.get("init_design", 8))
    flags = _pipeline_flags(cfg)
    export_cache = {}

    def objective(point):
        candidate = runconfig.apply_space_point(template, point, export)
        cache_key = (candidate.export.acquisitions, candidate.export.datatypes,
                     candidate.export.n_points, candidate.export.ppm_band)
        if cache_key not in export_cache:
            export_cache[cache_key] = export_labelled(dataset, candidate.export, **flags)
        epochs = selection.get("epochs") or default_selection_epochs(candidate)
        result = cross_validate(candidate, export_cache[cache_key],
                                folds=selection.get("folds", 5),
                                epochs=epochs, seed=seed, workers=args.threads)
        return {"mean": result["mean_mae"], "folds": result["fold_maes"]}

    result = select_model(space, objective, budget, seed=seed,
                          ledger_path=args.ledger)
    payload = {
        "best_config": result.best_config,
        "best_value": result.best_value,
        "trace": [{k: v for k, v in entry.items() if k != "wall_time"}
                  for entry in result.trace],
        "stamp": runconfig.make_stamp(cfg, seed),
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    log.info("selection finished after %d evaluations; best value %.6g",
             result.n_evaluations, result.best_value)
    return 0


def _restore_model(path: str) -> TrainedModel:
    manifest, params = archive.load_model(path)
    model_cfg = runconfig.model_config_from_dict(manifest["config"])
    model = build_cnn(model_cfg) if manifest["arch"] == "cnn" else build_yae(model_cfg)
    live = model.params()
    if len(live) != len(params):
        raise ConfigError("checkpoint parameter count does not match architecture")
    for dst, src in zip(live, params):
        if dst.shape != src.shape:
            raise ConfigError("checkpoint parameter shapes do not match architecture")
        dst[...] = src
    return TrainedModel(manifest["arch"], model_cfg, model,
                        manifest.get("training_log", []), manifest.get("seed", 0))


def _records_from_predictions(ids, experiments, pred_max, truth_max, metabolites, label):
    records = []
    for i in range(len(ids)):
        records.append(PredictionRecord(
            str(ids[i]), str(experiments[i]),
            TargetVector(pred_max[i], "max", metabolites),
            TargetVector(truth_max[i], "max", metabolites), label))
    return records


def _write_records_csv(path: str, records: List[PredictionRecord], metabolites):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["spectrum_id", "experiment_id", "model"]
                        + [f"truth_{m}" for m in metabolites]
                        + [f"pred_{m}" for m in metabolites])
        for rec in records:
            writer.writerow([rec.spectrum_id, rec.experiment_id, rec.model]
                            + [repr(float(v)) for v in rec.truth.values]
                            + [repr(float(v)) for v in rec.predicted.values])


def _read_records_csv(path: str) -> List[PredictionRecord]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = rows[0]
    metabolites = tuple(h[len("truth_"):] for h in header if h.startswith("truth_"))
    records = []
    for row in rows[1:]:
        values = dict(zip(header, row))
        truth = np.array([float(values[f"truth_{m}"]) for m in metabolites])
        pred = np.array([float(values[f"pred_{m}"]) for m in metabolites])
        records.append(PredictionRecord(
            values["spectrum_id"], values["experiment_id"],
            TargetVector(pred, "max", metabolites),
            TargetVector(truth, "max", metabolites), values["model"]))
    return records


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config, args.seed) if args.config else {}
    trained = _restore_model(args.model)
    dataset, manifest = archive.load_dataset(args.data)
    data = export_labelled(dataset, trained.config.export, **_pipeline_flags(cfg))
    pred_max = trained.predict_max_normalised(data.x)
    truth_max = max_normalise_rows(data.targets_raw)
    label = args.label or trained.arch
    experiment = cfg.get("evaluation", {}).get("experiment_label", "sim")
    ids = [f"s{int(s.meta.sobol_index)}" for s in dataset]
    records = _records_from_predictions(ids, [experiment] * len(ids), pred_max,
                                        truth_max, data.metabolites, label)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_records_csv(os.path.join(args.out_dir, "records.csv"), records,
                       data.metabolites)
    report = build_report(records)
    report.write_csv(args.out_dir)
    report.write_plot_data(os.path.join(args.out_dir, "plot_data"))
    metrics = {"concentration_mae": float(np.mean(np.abs(pred_max - truth_max)))}
    if trained.arch == "yae":
        metrics["reconstruction_mae"] = spectral_mae(
            data.clean, trained.reconstruct(data.x))
    with open(os.path.join(args.out_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=1)
        fh.write("\n")
    stamp = runconfig.make_stamp(cfg, args.seed)
    with open(os.path.join(args.out_dir, "stamp.json"), "w") as fh:
        json.dump(stamp, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(os.path.join(args.out_dir, "summary.txt"), "w") as fh:
        fh.write(report.to_text() + "\n")
    log.info("evaluated %d spectra; report in %s", len(records), args.out_dir)
    return 0


def cmd_compare(args) -> int:
    records = []
    for path in args.records:
        records.extend(_read_records_csv(path))
    report = build_report(records)
    os.makedirs(args.out_dir, exist_ok=True)
    report.write_csv(args.out_dir)
    with open(os.path.join(args.out_dir, "summary.txt"), "w") as fh:
        fh.write(report.to_text() + "\n")
    with open(os.path.join(args.out_dir, "stamp.json"), "w") as fh:
        json.dump(runconfig.make_stamp({"records": sorted(args.records)}, args.seed),
                  fh, sort_keys=True, indent=1)
        fh.write("\n")
    log.info("compared %d models over %d records",
             len(report.models), len(records))
    return 0


def cmd_lls_fit(args) -> int:
    cfg = _load_config(args.config, args.seed) if args.config else {}
    basis, _ = archive.load_basis(args.basis)
    dataset, _ = archive.load_dataset(args.input)
    export = None
    if "export" in cfg:
        export = runconfig.export_from_config(cfg["export"])
    print("# metabolites: " + " ".join(basis.metabolites))
    rows = []
    for sample in dataset:
        fitted = lls_quantify(basis, sample.acquisitions, export)
        rows.append((sample.meta.sobol_index, fitted.values))
        print(f"s{sample.meta.sobol_index} "
              + " ".join(repr(float(v)) for v in fitted.values))
    if args.out:
        stamp = runconfig.make_stamp(cfg, args.seed)
        with open(args.out, "w", newline="") as fh:
            fh.write(f"# megaquant-stamp {json.dumps(stamp, sort_keys=True)}\n")
            writer = csv.writer(fh)
            writer.writerow(["spectrum_id"] + list(basis.metabolites))
            for index, values in rows:
                writer.writerow([f"s{index}"] + [repr(float(v)) for v in values])
    return 0


_COMMANDS = {
    "basis-synth": cmd_basis_synth,
    "generate": cmd_generate,
    "train": cmd_train,
    "select": cmd_select,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "lls-fit": cmd_lls_fit,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        code = _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    except MegaquantError as exc:
        log.error("%s", exc)
        return 2
    except Exception:  # pragma: no cover - unexpected failure path
        log.exception("unexpected failure")
        return 2
    log.debug("completed in %.2fs", time.perf_counter() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
