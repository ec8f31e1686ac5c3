"""Exported training tensors: the bridge from spectra to model inputs."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import NormalisationError
from ..preprocess import ExportConfig, preprocess_export
from ..spectra import PpmAxis
from ..synthesis import BasisSet, LabelledDataset, SynthesisConfig, generate_sample


@dataclass(frozen=True)
class ExportedData:
    """Channel tensors plus raw targets for a labelled dataset.

    ``x`` holds the noisy channels, ``clean`` the matching noise-free
    reference (the reconstruction target), both (N, channels, points).
    Targets stay raw (relative concentrations in [0,1]); normalisation
    happens per training configuration.
    """

    x: np.ndarray
    clean: np.ndarray
    targets_raw: np.ndarray
    channel_labels: Tuple[Tuple[str, str], ...]
    axis: PpmAxis
    metabolites: Tuple[str, ...]

    def __len__(self):
        return self.x.shape[0]

    def subset(self, indices) -> "ExportedData":
        idx = np.asarray(indices)
        return ExportedData(self.x[idx], self.clean[idx], self.targets_raw[idx],
                            self.channel_labels, self.axis, self.metabolites)

    def normalised_targets(self, mode: str) -> np.ndarray:
        return normalise_target_rows(self.targets_raw, mode)


def normalise_target_rows(raw: np.ndarray, mode: str) -> np.ndarray:
    """Row-wise sum- or max-normalisation; all-zero rows are undefined."""
    denom = raw.sum(axis=1) if mode == "sum" else raw.max(axis=1)
    if np.any(denom == 0):
        bad = int(np.nonzero(denom == 0)[0][0])
        raise NormalisationError(
            f"sample {bad} has an all-zero concentration vector; "
            "normalisation is undefined (avoid Sobol index 0)")
    return raw / denom[:, None]


def max_normalise_rows(values: np.ndarray) -> np.ndarray:
    """Max-normalise predictions; all-zero rows stay zero."""
    denom = values.max(axis=1)
    out = np.zeros_like(values)
    ok = denom > 0
    out[ok] = values[ok] / denom[ok, None]
    return out


def export_labelled(dataset: LabelledDataset, cfg: ExportConfig, *,
                    water: bool = False, align: bool = True) -> ExportedData:
    """Run the preprocessing pipeline over every sample of a dataset."""
    n = len(dataset)
    x = np.empty((n, cfg.n_channels, cfg.n_points))
    clean = np.empty_like(x)
    targets = np.empty((n, len(dataset.metabolites)))
    axis = None
    for i, sample in enumerate(dataset):
        noisy = preprocess_export(sample.acquisitions, cfg, water=water, align=align)
        ref = preprocess_export(sample.clean_acquisitions, cfg, water=water, align=align)
        x[i] = noisy.channels
        clean[i] = ref.channels
        targets[i] = sample.target.values
        axis = noisy.axis
    return ExportedData(x, clean, targets, cfg.channel_labels, axis,
                        tuple(dataset.metabolites))


def _export_batch(args):
    basis, synth_cfg, export_cfg, indices, water, align = args
    x = np.empty((len(indices), export_cfg.n_channels, export_cfg.n_points))
    clean = np.empty_like(x)
    targets = np.empty((len(indices), basis.n_metabolites))
    for row, i in enumerate(indices):
        sample = generate_sample(basis, synth_cfg, i)
        x[row] = preprocess_export(sample.acquisitions, export_cfg,
                                   water=water, align=align).channels
        clean[row] = preprocess_export(sample.clean_acquisitions, export_cfg,
                                       water=water, align=align).channels
        targets[row] = sample.target.values
    return x, clean, targets


def generate_exported(basis: BasisSet, synth_cfg: SynthesisConfig,
                      export_cfg: ExportConfig, *, water: bool = False,
                      align: bool = True, workers: int = 1) -> ExportedData:
    """Generate and export in one streaming pass, never holding all spectra."""
    n = synth_cfg.n_samples
    indices = np.arange(n)
    if workers <= 1 or n < 2 * workers:
        chunks = [indices[i:i + 256] for i in range(0, n, 256)]
        parts = [_export_batch((basis, synth_cfg, export_cfg, list(c), water, align))
                 for c in chunks if len(c)]
    else:
        chunks = [c for c in np.array_split(indices, workers * 4) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                _export_batch,
                [(basis, synth_cfg, export_cfg, list(c), water, align) for c in chunks]))
    x = np.concatenate([p[0] for p in parts]) if parts else \
        np.empty((0, export_cfg.n_channels, export_cfg.n_points))
    clean = np.concatenate([p[1] for p in parts]) if parts else np.empty_like(x)
    targets = np.concatenate([p[2] for p in parts]) if parts else \
        np.empty((0, basis.n_metabolites))
    axis = PpmAxis.uniform_band(max(export_cfg.ppm_band), min(export_cfg.ppm_band),
                                export_cfg.n_points, basis.axis.spectrometer_freq)
    return ExportedData(x, clean, targets, export_cfg.channel_labels, axis,
                        tuple(basis.metabolites))
