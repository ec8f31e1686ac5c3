"""Labelled mixture-dataset generation.

Mixtures are concentration-weighted sums of single-metabolite basis
FIDs, optionally broadened by apodization, peak-normalised, and
corrupted with complex Gaussian time-domain noise. Concentrations come
from the Sobol sequence; every sample's randomness is derived from
(master_seed, sobol_index) so generation order and parallelism cannot
change the output.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .defaults import METABOLITES, OFF, ON
from .errors import DimensionError, DomainError
from .sobol import sobol_sample
from .spectra import AcquisitionSet, Fid, PpmAxis, Spectrum, apodize, compute_diff, fft_fid, ifft_spectrum

# Per-metabolite peak tables: (ppm, relative amplitude, edited). Edited
# peaks are attenuated in the ON acquisition, so they survive in DIFF.
# The positions follow the usual proton assignments; amplitudes are a
# test-fixture convention, not quantum-mechanical simulations.
DEFAULT_PEAK_TABLE: Dict[str, Sequence[Tuple]] = {
    "NAA": ((2.01, 1.00, False), (2.49, 0.12, False), (2.67, 0.10, False)),
    "Cr": ((3.03, 0.80, False), (3.91, 0.65, False)),
    "GABA": ((3.01, 0.35, True), (2.28, 0.30, True), (1.89, 0.25, False)),
    "Glu": ((3.75, 0.40, False), (2.35, 0.35, True), (2.08, 0.30, False)),
    "Gln": ((3.77, 0.38, False), (2.45, 0.32, True), (2.13, 0.28, False)),
}
DEFAULT_EDIT_ATTENUATION = 0.35


@dataclass(frozen=True)
class BasisSet:
    """Single-metabolite reference FIDs for OFF and ON acquisitions."""

    metabolites: Tuple[str, ...]
    fids: Dict[str, Dict[str, Fid]]
    intrinsic_fwhm: float
    axis: PpmAxis

    def __post_init__(self):
        if not self.intrinsic_fwhm > 0:
            raise DomainError("intrinsic_fwhm must be positive")
        for name in self.metabolites:
            entry = self.fids.get(name)
            if entry is None or OFF not in entry or ON not in entry:
                raise DimensionError(f"basis entry for {name} needs OFF and ON FIDs")
            for fid in entry.values():
                if fid.n_samples != self.axis.n_points:
                    raise DimensionError("basis FIDs must match the shared axis")
                if not np.isclose(fid.bandwidth, self.axis.bandwidth, rtol=1e-9):
                    raise DimensionError("basis FIDs must share the axis bandwidth")

    @property
    def n_metabolites(self) -> int:
        return len(self.metabolites)

    def spectrum(self, name: str, acquisition: str) -> Spectrum:
        return fft_fid(self.fids[name][acquisition], self.axis, acquisition,
                       {"metabolite": name, "kind": "basis"})


@dataclass(frozen=True)
class ConcentrationVector:
    """Relative concentrations in [0,1], one per metabolite."""

    values: np.ndarray
    metabolites: Tuple[str, ...] = METABOLITES

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.metabolites),):
            raise DimensionError("one concentration per metabolite required")
        if np.any(vals < 0) or np.any(vals > 1):
            raise DomainError("relative concentrations must lie in [0,1]")


@dataclass(frozen=True)
class FixedLinewidth:
    fwhm: float


@dataclass(frozen=True)
class GridLinewidth:
    """Uniform draw over the grid {low, low+step, ..., high}."""

    low: float
    high: float
    step: float

    def values(self) -> np.ndarray:
        count = int(round((self.high - self.low) / self.step)) + 1
        return self.low + self.step * np.arange(count)


LinewidthMode = Union[FixedLinewidth, GridLinewidth]


@dataclass(frozen=True)
class SynthesisConfig:
    n_samples: int
    noise_sigma_range: Tuple[float, float] = (0.0, 0.03)
    linewidth: LinewidthMode = FixedLinewidth(2.0)
    master_seed: int = 0
    sobol_skip: int = 0

    def __post_init__(self):
        low, high = self.noise_sigma_range
        if not (0 <= low <= high):
            raise DomainError("noise sigma range must satisfy 0 <= low <= high")
        if self.n_samples < 0 or self.sobol_skip < 0:
            raise DomainError("n_samples and sobol_skip must be >= 0")
        if isinstance(self.linewidth, GridLinewidth):
            g = self.linewidth
            if not (g.step > 0 and g.high >= g.low > 0):
                raise DomainError("linewidth grid needs high >= low > 0 and step > 0")


@dataclass(frozen=True)
class SampleMeta:
    noise_sigma: float
    linewidth: float
    seed: int
    sobol_index: int


@dataclass(frozen=True)
class LabelledSample:
    acquisitions: AcquisitionSet
    clean_acquisitions: AcquisitionSet
    target: ConcentrationVector
    meta: SampleMeta


@dataclass(frozen=True)
class LabelledDataset:
    samples: List[LabelledSample]
    metabolites: Tuple[str, ...]
    axis: PpmAxis
    config: Optional[SynthesisConfig] = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def targets(self) -> np.ndarray:
        return np.stack([s.target.values for s in self.samples])


def generate_lorentzian_basis(peak_table: Dict[str, Sequence[Tuple]],
                              fwhm: float, axis: PpmAxis,
                              edit_attenuation: float = DEFAULT_EDIT_ATTENUATION,
                              metabolites: Optional[Sequence[str]] = None) -> BasisSet:
    """Sum-of-complex-exponentials basis apodized to ``fwhm``.

    Each table entry is (ppm, amplitude) or (ppm, amplitude, edited);
    edited peaks have their ON amplitude multiplied by
    ``edit_attenuation``.
    """
    if not fwhm > 0:
        raise DomainError("fwhm must be positive")
    names = tuple(metabolites) if metabolites is not None else tuple(peak_table)
    times = np.arange(axis.n_points) / axis.bandwidth
    f_lo = axis.bin0_freq
    f_hi = axis.bin0_freq + axis.bandwidth
    fids: Dict[str, Dict[str, Fid]] = {}
    for name in names:
        acc = {OFF: np.zeros(axis.n_points, dtype=np.complex128),
               ON: np.zeros(axis.n_points, dtype=np.complex128)}
        for entry in peak_table[name]:
            ppm, amp = entry[0], entry[1]
            edited = bool(entry[2]) if len(entry) > 2 else False
            f = (axis.center_ppm - ppm) * axis.spectrometer_freq
            if not (f_lo <= f < f_hi):
                raise DomainError(
                    f"peak at {ppm} ppm ({f:.1f} Hz) lies outside the axis")
            osc = np.exp(2j * np.pi * f * times)
            acc[OFF] += amp * osc
            acc[ON] += amp * (edit_attenuation if edited else 1.0) * osc
        dwell = 1.0 / axis.bandwidth
        fids[name] = {acq: apodize(Fid(acc[acq], dwell), fwhm) for acq in (OFF, ON)}
    return BasisSet(names, fids, fwhm, axis)


def mix_spectrum(basis: BasisSet, c: ConcentrationVector, linewidth: float) -> AcquisitionSet:
    """Weighted basis sum at the requested linewidth, with DIFF recomputed."""
    if tuple(c.metabolites) != tuple(basis.metabolites):
        raise DimensionError("concentration vector order must match the basis")
    extra = linewidth - basis.intrinsic_fwhm
    if extra < -1e-12:
        raise DomainError(
            f"cannot narrow by apodization: requested {linewidth} Hz below "
            f"intrinsic {basis.intrinsic_fwhm} Hz")
    extra = max(extra, 0.0)
    spectra = {}
    for acq in (OFF, ON):
        total = np.zeros(basis.axis.n_points, dtype=np.complex128)
        for weight, name in zip(c.values, basis.metabolites):
            if weight == 0.0:
                continue
            total += weight * apodize(basis.fids[name][acq], extra).samples
        spectra[acq] = fft_fid(Fid(total, 1.0 / basis.axis.bandwidth), basis.axis,
                               acq, {"kind": "mixture", "linewidth": linewidth})
    return AcquisitionSet(off=spectra[OFF], on=spectra[ON],
                          diff=compute_diff(spectra[OFF], spectra[ON]))


def normalise_peak(acqs: AcquisitionSet) -> AcquisitionSet:
    """Scale so the maximum OFF/ON spectral magnitude is exactly 1.

    All-zero sets pass through unchanged (nothing to scale).
    """
    peak = max(np.max(np.abs(s.values)) for s in (acqs.off, acqs.on) if s is not None)
    if peak == 0.0:
        return acqs
    return acqs.map_values(lambda v, s: v / peak)


def add_noise(sample: AcquisitionSet, sigma: float, seed: int) -> AcquisitionSet:
    """Complex Gaussian time-domain noise on OFF and ON; DIFF recomputed.

    Noise is independent per acquisition with standard deviation
    ``sigma`` per real/imaginary component; the unitary Fourier pair
    keeps that deviation identical in the frequency domain. The caller
    is expected to have peak-normalised the spectra (see
    :func:`normalise_peak`) so sigma is relative to unit peak.
    """
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return sample
    rng = np.random.Generator(np.random.PCG64(seed))
    noisy = {}
    for acq, spec in ((OFF, sample.off), (ON, sample.on)):
        if spec is None:
            noisy[acq] = None
            continue
        fid = ifft_spectrum(spec)
        n = fid.n_samples
        noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        noisy[acq] = fft_fid(Fid(fid.samples + noise, fid.dwell_time), spec.axis,
                             acq, dict(spec.provenance))
    diff = None
    if noisy[OFF] is not None and noisy[ON] is not None:
        diff = compute_diff(noisy[OFF], noisy[ON])
    elif sample.diff is not None:
        diff = sample.diff
    return AcquisitionSet(off=noisy[OFF], on=noisy[ON], diff=diff)


def _sample_rngs(master_seed: int, sobol_index: int):
    ss = np.random.SeedSequence(master_seed, spawn_key=(sobol_index,))
    draw_seed, noise_seed = (int(s) for s in ss.generate_state(2))
    return np.random.Generator(np.random.PCG64(draw_seed)), noise_seed


def generate_sample(basis: BasisSet, cfg: SynthesisConfig, i: int) -> LabelledSample:
    """Sample ``i`` of the dataset; a pure function of (basis, cfg, i)."""
    sobol_index = cfg.sobol_skip + i
    c = ConcentrationVector(sobol_sample(basis.n_metabolites, i, cfg.sobol_skip),
                            basis.metabolites)
    rng, noise_seed = _sample_rngs(cfg.master_seed, sobol_index)
    low, high = cfg.noise_sigma_range
    sigma = float(rng.uniform(low, high)) if high > low else float(low)
    if isinstance(cfg.linewidth, FixedLinewidth):
        linewidth = cfg.linewidth.fwhm
    else:
        grid = cfg.linewidth.values()
        if grid[0] < basis.intrinsic_fwhm - 1e-12:
            raise DomainError("linewidth grid extends below the basis intrinsic FWHM")
        linewidth = float(rng.choice(grid))
    clean = normalise_peak(mix_spectrum(basis, c, linewidth))
    noisy = add_noise(clean, sigma, noise_seed)
    return LabelledSample(noisy, clean, c,
                          SampleMeta(sigma, linewidth, noise_seed, sobol_index))


def _sample_batch(args):
    basis, cfg, indices = args
    return [generate_sample(basis, cfg, i) for i in indices]


def generate_dataset(basis: BasisSet, cfg: SynthesisConfig, workers: int = 1) -> LabelledDataset:
    """All ``cfg.n_samples`` labelled samples, deterministic in (basis, cfg)."""
    if workers <= 1 or cfg.n_samples < 2 * workers:
        samples = [generate_sample(basis, cfg, i) for i in range(cfg.n_samples)]
    else:
        chunks = np.array_split(np.arange(cfg.n_samples), workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_sample_batch,
                             [(basis, cfg, list(chunk)) for chunk in chunks if len(chunk)])
        samples = [s for part in parts for s in part]
    return LabelledDataset(samples, basis.metabolites, basis.axis, cfg)
