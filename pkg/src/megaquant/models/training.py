"""Training loops, the joint-loss ramp, and k-fold cross-validation.

CNNs minimise mean squared error on normalised targets. The autoencoder
minimises recon_weight * huber(reconstruction, clean) + w(t) *
huber(concentrations, targets), with w(t) ramping linearly from its
start value to its end value over the warm-up epochs, then held.
Everything is bit-deterministic given (config, dataset, seed).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from ..errors import ConfigError, TrainingError
from ..nn import Adam, huber_loss, huber_loss_grad, mse_loss, mse_loss_grad, scaled_learning_rate
from ..synthesis import LabelledDataset
from .cnn import CnnConfig, build_cnn
from .dataset import ExportedData, export_labelled, max_normalise_rows
from .yae import YaeConfig, build_yae

ModelConfig = Union[CnnConfig, YaeConfig]

# selection-stage training lengths: the autoencoder needs twice the
# epochs of the less complex CNN
DEFAULT_SELECTION_EPOCHS = {"cnn": 100, "yae": 200}


def default_selection_epochs(cfg: ModelConfig) -> int:
    return DEFAULT_SELECTION_EPOCHS["cnn" if isinstance(cfg, CnnConfig) else "yae"]


@dataclass
class TrainedModel:
    arch: str
    config: ModelConfig
    model: object
    training_log: List[dict] = field(default_factory=list)
    seed: int = 0

    def params(self) -> List[np.ndarray]:
        return self.model.params()

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Concentrations in the training normalisation space."""
        if self.arch == "cnn":
            return self.model.forward(x[:, None, :, :], training=False)
        return self.model.predict(x)

    def predict_max_normalised(self, x: np.ndarray) -> np.ndarray:
        return max_normalise_rows(self.predict(x))

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        if self.arch != "yae":
            raise ConfigError("only the autoencoder reconstructs spectra")
        return self.model.reconstruct(x)


def predict_max_normalised(trained: TrainedModel, x: np.ndarray) -> np.ndarray:
    return trained.predict_max_normalised(x)


def quantifier_ramp(epoch: int, ramp_epochs: int, start: float = 0.1,
                    end: float = 1.0) -> float:
    """Linear warm-up: start at epoch 0, end from ``ramp_epochs`` onwards."""
    if ramp_epochs <= 0 or epoch >= ramp_epochs:
        return end
    return start + (end - start) * (epoch / ramp_epochs)


def _as_exported(data, cfg: ModelConfig) -> ExportedData:
    if isinstance(data, LabelledDataset):
        return export_labelled(data, cfg.export)
    return data


def _rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    init, shuffle, dropout = (np.random.Generator(np.random.PCG64(c))
                              for c in ss.spawn(3))
    return init, shuffle, dropout


def validation_mae(trained: TrainedModel, data: ExportedData) -> float:
    """Mean absolute error in max-normalised concentration space."""
    pred = trained.predict_max_normalised(data.x)
    truth = max_normalise_rows(data.targets_raw)
    return float(np.mean(np.abs(pred - truth)))


def train(cfg: ModelConfig, data, epochs: int, seed: int = 0,
          val_data: Optional[ExportedData] = None,
          learning_rate: Optional[float] = None) -> TrainedModel:
    """Train one model; the log carries one entry per epoch."""
    data = _as_exported(data, cfg)
    if len(data) == 0:
        raise ConfigError("cannot train on an empty dataset")
    targets = data.normalised_targets(cfg.export.target_norm)
    init_rng, shuffle_rng, dropout_rng = _rngs(seed)
    lr = learning_rate if learning_rate is not None else scaled_learning_rate(cfg.batch_size)

    if isinstance(cfg, CnnConfig):
        arch = "cnn"
        model = build_cnn(cfg, init_rng)
        ramp_epochs = 0
    else:
        arch = "yae"
        model = build_yae(cfg, init_rng)
        ramp_epochs = cfg.ramp_epochs if cfg.ramp_epochs is not None \
            else max(1, round(0.1 * epochs))
    model.seed_dropout(dropout_rng)
    optimiser = Adam(model.params(), learning_rate=lr)
    trained = TrainedModel(arch, cfg, model, [], seed)

    n = len(data)
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        w_q = quantifier_ramp(epoch, ramp_epochs, cfg.quant_weight_start,
                              cfg.quant_weight_end) if arch == "yae" else None
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb, tb = data.x[batch], targets[batch]
            if arch == "cnn":
                out = model.forward(xb[:, None, :, :], training=True)
                loss = mse_loss(out, tb)
                if not np.isfinite(loss):
                    raise TrainingError("non-finite training loss",
                                        epoch=epoch, batch=start // cfg.batch_size)
                model.backward(mse_loss_grad(out, tb))
            else:
                cb = data.clean[batch]
                recon, pred = model.forward(xb, training=True)
                loss = (cfg.recon_weight * huber_loss(recon, cb, cfg.huber_delta)
                        + w_q * huber_loss(pred, tb, cfg.huber_delta))
                if not np.isfinite(loss):
                    raise TrainingError("non-finite training loss",
                                        epoch=epoch, batch=start // cfg.batch_size)
                model.backward(
                    cfg.recon_weight * huber_loss_grad(recon, cb, cfg.huber_delta),
                    w_q * huber_loss_grad(pred, tb, cfg.huber_delta))
            optimiser.step(model.grads())
            total += loss * len(batch)
            seen += len(batch)
        entry = {"epoch": epoch, "train_loss": total / seen}
        if arch == "yae":
            entry["quant_weight"] = w_q
        if val_data is not None:
            entry["val_mae"] = validation_mae(trained, val_data)
        trained.training_log.append(entry)
    return trained


def _fold_worker(args):
    cfg, data, train_idx, val_idx, epochs, fold_seed = args
    trained = train(cfg, data.subset(train_idx), epochs, seed=fold_seed)
    return validation_mae(trained, data.subset(val_idx))


def cross_validate(cfg: ModelConfig, data, folds: int = 5, epochs: int = 10,
                   seed: int = 0, workers: int = 1) -> dict:
    """Seeded k-fold CV; reports MAE in max-normalised space per fold.

    The fold partition is a permutation: every sample lands in exactly
    one validation fold; folds differ in size by at most one.
    """
    data = _as_exported(data, cfg)
    n = len(data)
    if folds < 2 or folds > n:
        raise ConfigError(f"folds must lie in [2, {n}], got {folds}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    fold_indices = np.array_split(perm, folds)
    # one shared training seed: folds differ only in their data, so the
    # procedure is exchangeable under permutations of identical samples
    fold_seed = int(np.random.SeedSequence(seed).generate_state(1)[0])
    jobs = []
    for k, val_idx in enumerate(fold_indices):
        train_idx = np.concatenate([f for j, f in enumerate(fold_indices) if j != k])
        jobs.append((cfg, data, train_idx, val_idx, epochs, fold_seed))
    if workers <= 1:
        maes = [_fold_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            maes = list(pool.map(_fold_worker, jobs))
    maes = np.asarray(maes)
    return {"mean_mae": float(maes.mean()), "std_mae": float(maes.std()),
            "fold_maes": [float(m) for m in maes],
            "fold_sizes": [len(f) for f in fold_indices]}
