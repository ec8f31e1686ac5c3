"""Self-describing binary archives for datasets, bases and model checkpoints.

One container format: a 4-byte magic, an 8-byte little-endian manifest
length, a canonical-JSON manifest, then the payload as concatenated
little-endian IEEE-754 float64 sections (row-major). The manifest lists
every section's name and shape and carries a SHA-256 checksum of the
payload, so a flipped byte anywhere is detected on read. Complex data
is stored as a trailing [real, imag] axis.
"""
from __future__ import annotations

import hashlib
import json
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .defaults import DIFF, OFF, ON
from .errors import ArchiveError, ChecksumError, VersionError
from .spectra import AcquisitionSet, Fid, PpmAxis, Spectrum
from .synthesis import (BasisSet, ConcentrationVector, FixedLinewidth,
                        GridLinewidth, LabelledDataset, LabelledSample,
                        SampleMeta, SynthesisConfig)

MAGIC = b"MQAR"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(path: str, manifest: dict, sections: Sequence[Tuple[str, np.ndarray]]):
    payload = b"".join(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
                       for _name, arr in sections)
    full = dict(manifest)
    full["format_version"] = FORMAT_VERSION
    full["sections"] = [{"name": name, "shape": list(arr.shape)}
                        for name, arr in sections]
    full["checksum_sha256"] = hashlib.sha256(payload).hexdigest()
    blob = _canonical_json(full)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(payload)


def read_container(path: str) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ArchiveError(f"{path}: not a megaquant archive")
        length = int.from_bytes(fh.read(8), "little")
        manifest = json.loads(fh.read(length).decode("utf-8"))
        payload = fh.read()
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version} not supported")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("checksum_sha256"):
        raise ChecksumError(f"{path}: payload checksum mismatch")
    arrays = {}
    offset = 0
    for section in manifest["sections"]:
        shape = tuple(section["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * _DTYPE.itemsize
        if offset + nbytes > len(payload):
            raise ArchiveError(f"{path}: truncated payload")
        arrays[section["name"]] = np.frombuffer(
            payload[offset:offset + nbytes], dtype=_DTYPE).reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise ArchiveError(f"{path}: trailing bytes in payload")
    return manifest, arrays


def _axis_to_dict(axis: PpmAxis) -> dict:
    return {"spectrometer_freq": axis.spectrometer_freq, "center_ppm": axis.center_ppm,
            "n_points": axis.n_points, "bandwidth": axis.bandwidth,
            "bin0_freq": axis.bin0_freq}


def _axis_from_dict(d: dict) -> PpmAxis:
    return PpmAxis(spectrometer_freq=d["spectrometer_freq"], center_ppm=d["center_ppm"],
                   n_points=int(d["n_points"]), bandwidth=d["bandwidth"],
                   bin0_freq=d.get("bin0_freq"))


def _synthesis_to_dict(cfg: Optional[SynthesisConfig]) -> Optional[dict]:
    if cfg is None:
        return None
    if isinstance(cfg.linewidth, FixedLinewidth):
        lw = {"mode": "fixed", "fwhm": cfg.linewidth.fwhm}
    else:
        lw = {"mode": "grid", "low": cfg.linewidth.low, "high": cfg.linewidth.high,
              "step": cfg.linewidth.step}
    return {"n_samples": cfg.n_samples, "noise_sigma_range": list(cfg.noise_sigma_range),
            "linewidth": lw, "master_seed": cfg.master_seed, "sobol_skip": cfg.sobol_skip}


def _synthesis_from_dict(d: Optional[dict]) -> Optional[SynthesisConfig]:
    if d is None:
        return None
    lw = d["linewidth"]
    linewidth = (FixedLinewidth(lw["fwhm"]) if lw["mode"] == "fixed"
                 else GridLinewidth(lw["low"], lw["high"], lw["step"]))
    return SynthesisConfig(n_samples=int(d["n_samples"]),
                           noise_sigma_range=tuple(d["noise_sigma_range"]),
                           linewidth=linewidth, master_seed=int(d["master_seed"]),
                           sobol_skip=int(d["sobol_skip"]))


def _spectra_block(dataset: LabelledDataset, clean: bool) -> np.ndarray:
    """[sample][acquisition-channel][point][re/im] for OFF, ON, DIFF."""
    n = len(dataset)
    points = dataset.axis.n_points
    out = np.zeros((n, 3, points, 2))
    for i, sample in enumerate(dataset):
        acqs = sample.clean_acquisitions if clean else sample.acquisitions
        for c, acq in enumerate((OFF, ON, DIFF)):
            spec = acqs.get(acq)
            if spec is not None:
                out[i, c, :, 0] = spec.values.real
                out[i, c, :, 1] = spec.values.imag
    return out


def save_dataset(path: str, dataset: LabelledDataset, stamp: Optional[dict] = None):
    meta = np.array([[s.meta.noise_sigma, s.meta.linewidth,
                      float(s.meta.seed), float(s.meta.sobol_index)]
                     for s in dataset]).reshape(len(dataset), 4)
    manifest = {
        "kind": "dataset",
        "axis": _axis_to_dict(dataset.axis),
        "metabolites": list(dataset.metabolites),
        "synthesis": _synthesis_to_dict(dataset.config),
        "stamp": stamp or {},
    }
    write_container(path, manifest, [
        ("noisy", _spectra_block(dataset, clean=False)),
        ("clean", _spectra_block(dataset, clean=True)),
        ("targets", dataset.targets() if len(dataset) else np.zeros((0, len(dataset.metabolites)))),
        ("meta", meta),
    ])


def _set_from_block(block: np.ndarray, axis: PpmAxis) -> AcquisitionSet:
    members = {}
    for c, acq in enumerate((OFF, ON, DIFF)):
        values = block[c, :, 0] + 1j * block[c, :, 1]
        members[acq.lower()] = Spectrum(values, axis, acq)
    return AcquisitionSet(**members)


def load_dataset(path: str) -> Tuple[LabelledDataset, dict]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "dataset":
        raise ArchiveError(f"{path}: expected a dataset archive, got {manifest.get('kind')}")
    axis = _axis_from_dict(manifest["axis"])
    metabolites = tuple(manifest["metabolites"])
    samples: List[LabelledSample] = []
    for i in range(arrays["noisy"].shape[0]):
        noisy = _set_from_block(arrays["noisy"][i], axis)
        clean = _set_from_block(arrays["clean"][i], axis)
        target = ConcentrationVector(arrays["targets"][i], metabolites)
        sigma, lw, seed, sobol_index = arrays["meta"][i]
        samples.append(LabelledSample(noisy, clean, target,
                                      SampleMeta(float(sigma), float(lw),
                                                 int(seed), int(sobol_index))))
    dataset = LabelledDataset(samples, metabolites, axis,
                              _synthesis_from_dict(manifest.get("synthesis")))
    return dataset, manifest


def save_basis(path: str, basis: BasisSet, stamp: Optional[dict] = None):
    n = basis.axis.n_points
    block = np.zeros((basis.n_metabolites, 2, n, 2))
    for m, name in enumerate(basis.metabolites):
        for a, acq in enumerate((OFF, ON)):
            fid = basis.fids[name][acq]
            block[m, a, :, 0] = fid.samples.real
            block[m, a, :, 1] = fid.samples.imag
    manifest = {
        "kind": "basis",
        "axis": _axis_to_dict(basis.axis),
        "metabolites": list(basis.metabolites),
        "intrinsic_fwhm": basis.intrinsic_fwhm,
        "stamp": stamp or {},
    }
    write_container(path, manifest, [("fids", block)])


def load_basis(path: str) -> Tuple[BasisSet, dict]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "basis":
        raise ArchiveError(f"{path}: expected a basis archive, got {manifest.get('kind')}")
    axis = _axis_from_dict(manifest["axis"])
    block = arrays["fids"]
    dwell = 1.0 / axis.bandwidth
    fids = {}
    for m, name in enumerate(manifest["metabolites"]):
        fids[name] = {acq: Fid(block[m, a, :, 0] + 1j * block[m, a, :, 1], dwell)
                      for a, acq in enumerate((OFF, ON))}
    basis = BasisSet(tuple(manifest["metabolites"]), fids,
                     manifest["intrinsic_fwhm"], axis)
    return basis, manifest


def save_model(path: str, arch: str, config_dict: dict, params: Sequence[np.ndarray],
               training_log: Sequence[dict], seed: int, stamp: Optional[dict] = None):
    manifest = {
        "kind": "model",
        "arch": arch,
        "config": config_dict,
        "training_log": list(training_log),
        "seed": seed,
        "stamp": stamp or {},
    }
    sections = [(f"param_{i:04d}", np.asarray(p)) for i, p in enumerate(params)]
    write_container(path, manifest, sections)


def load_model(path: str) -> Tuple[dict, List[np.ndarray]]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "model":
        raise ArchiveError(f"{path}: expected a model archive, got {manifest.get('kind')}")
    params = [arrays[name] for name in sorted(arrays)]
    return manifest, params
