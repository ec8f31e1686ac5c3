"""Harmonised export pipeline.

Order of operations for one measurement: optional water-window
attenuation, a single per-measurement frequency shift estimated from
reference peaks, crop/resample onto the common descending ppm band,
amplitude normalisation against the OFF acquisition, and finally the
real-valued channel matrix handed to models. Targets are normalised
separately (sum or max).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from scipy.optimize import minimize

from .defaults import (ACQUISITIONS, DATATYPES, EXPORT_BAND_PPM, EXPORT_POINTS,
                       REFERENCE_PEAKS, REFERENCE_WINDOW_PPM, WATER_CENTER_PPM,
                       WATER_CLAMP_FACTOR, WATER_HALF_WIDTH_PPM)
from .errors import (AlignmentError, ConfigError, DimensionError, DomainError,
                     EdgePeakError, ExportError, NormalisationError)
from .spectra import (AcquisitionSet, Fid, PpmAxis, Spectrum, compute_diff,
                      fft_fid, ifft_spectrum)
from .synthesis import ConcentrationVector


@dataclass(frozen=True)
class ExportConfig:
    """Which band, resolution, acquisitions and datatypes models see.

    Channel order is canonical: acquisition-major in (OFF, ON, DIFF)
    order, datatype-minor in (real, imaginary, magnitude) order,
    regardless of how the subsets are listed.
    """

    ppm_band: Tuple[float, float] = EXPORT_BAND_PPM
    n_points: int = EXPORT_POINTS
    acquisitions: Tuple[str, ...] = ("OFF", "ON")
    datatypes: Tuple[str, ...] = ("real",)
    target_norm: str = "sum"

    def __post_init__(self):
        high, low = self.ppm_band
        if not high > low:
            raise ConfigError("ppm band must satisfy high > low")
        if self.n_points < 2:
            raise ConfigError("n_points must be at least 2")
        acqs = tuple(a for a in ACQUISITIONS if a in set(self.acquisitions))
        dts = tuple(d for d in DATATYPES if d in set(self.datatypes))
        if len(acqs) != len(set(self.acquisitions)) or not acqs:
            raise ConfigError(f"invalid acquisitions {self.acquisitions}")
        if len(dts) != len(set(self.datatypes)) or not dts:
            raise ConfigError(f"invalid datatypes {self.datatypes}")
        if self.target_norm not in ("sum", "max"):
            raise ConfigError(f"target_norm must be 'sum' or 'max', got {self.target_norm}")
        object.__setattr__(self, "acquisitions", acqs)
        object.__setattr__(self, "datatypes", dts)

    @property
    def n_channels(self) -> int:
        return len(self.acquisitions) * len(self.datatypes)

    @property
    def channel_labels(self) -> Tuple[Tuple[str, str], ...]:
        return tuple((a, d) for a in self.acquisitions for d in self.datatypes)


@dataclass(frozen=True)
class ModelInput:
    """Real channel matrix [n_channels, n_points] plus its labelling."""

    channels: np.ndarray
    channel_labels: Tuple[Tuple[str, str], ...]
    axis: PpmAxis

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        if ch.ndim != 2 or ch.shape[0] != len(self.channel_labels):
            raise DimensionError("channel matrix must be [n_channels, n_points]")
        if ch.shape[1] != self.axis.n_points:
            raise DimensionError("channel length must match the export axis")
        if not np.all(np.isfinite(ch)):
            raise DomainError("exported channels contain non-finite values")


@dataclass(frozen=True)
class TargetVector:
    """Normalised relative concentrations (sum-to-one or max-to-one)."""

    values: np.ndarray
    norm_mode: str
    metabolites: Tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.norm_mode not in ("sum", "max"):
            raise ConfigError(f"unknown normalisation mode {self.norm_mode}")
        if np.any(vals < 0):
            raise DomainError("target values must be nonnegative")
        if np.any(vals > 0):
            total = vals.max() if self.norm_mode == "max" else vals.sum()
            if not np.isclose(total, 1.0, rtol=0, atol=1e-9):
                raise DomainError(f"{self.norm_mode}-normalised vector sums/maxes to {total}")


def attenuate_water(spec: Spectrum, center: float = WATER_CENTER_PPM,
                    half_width: float = WATER_HALF_WIDTH_PPM,
                    clamp_factor: float = WATER_CLAMP_FACTOR) -> Spectrum:
    """Clamp residual-water outliers towards the window median magnitude.

    Bins inside the window whose magnitude exceeds ``clamp_factor``
    times the window median are rescaled to the median magnitude with
    their phase untouched.
    """
    idx = spec.axis.window_indices(center + half_width, center - half_width)
    if idx.size == 0:
        prov = dict(spec.provenance)
        prov["water_window_empty"] = True
        return spec.with_values(spec.values, provenance=prov)
    values = np.array(spec.values)
    mag = np.abs(values[idx])
    median = float(np.median(mag))
    offenders = idx[mag > clamp_factor * median]
    if offenders.size:
        scale = median / np.abs(values[offenders])
        values[offenders] = values[offenders] * scale
    return spec.with_values(values)


def jain_peak_location(spec: Spectrum, window: Tuple[float, float]) -> float:
    """Sub-bin location of the strongest magnitude peak in a ppm window.

    Uses the two-point magnitude-ratio estimator: with the dominant bin
    k and its larger neighbour, offset = a/(1+a) towards that
    neighbour, a being the neighbour-to-peak magnitude ratio. Returns a
    fractional index into the full spectrum.
    """
    high, low = max(window), min(window)
    idx = spec.axis.window_indices(high, low)
    if idx.size < 3:
        raise DomainError("peak window must contain at least 3 bins")
    mag = spec.magnitude
    k = idx[np.argmax(mag[idx])]
    if k == idx[0] or k == idx[-1]:
        raise EdgePeakError(f"peak at window edge (bin {k})")
    if mag[k + 1] > mag[k - 1]:
        a = mag[k + 1] / mag[k]
        offset = a / (1.0 + a)
    else:
        a = mag[k - 1] / mag[k]
        offset = -a / (1.0 + a)
    return float(k + offset)


def shift_spectrum(spec: Spectrum, shift_ppm: float) -> Spectrum:
    """Move the spectrum by ``shift_ppm`` via linear resampling on its own axis."""
    if shift_ppm == 0.0:
        return spec
    f = spec.axis.frequencies
    query = f + shift_ppm * spec.axis.spectrometer_freq
    values = (np.interp(query, f, spec.values.real, left=0.0, right=0.0)
              + 1j * np.interp(query, f, spec.values.imag, left=0.0, right=0.0))
    prov = dict(spec.provenance)
    prov["b0_shift_ppm"] = prov.get("b0_shift_ppm", 0.0) + shift_ppm
    return spec.with_values(values, provenance=prov)


def estimate_b0_shift(acqs: AcquisitionSet,
                      reference_peaks=REFERENCE_PEAKS,
                      window_ppm: float = REFERENCE_WINDOW_PPM) -> Tuple[float, dict]:
    """One frequency shift (ppm) from the most prominent reference peak in OFF.

    Prominence is the peak magnitude minus the median magnitude within
    the peak's window. Candidates are tried in decreasing prominence;
    edge hits fall through to the next candidate.
    """
    if acqs.off is None:
        raise AlignmentError("B0 alignment needs the OFF acquisition")
    spec = acqs.off
    mag = spec.magnitude
    candidates = []
    prominences = {}
    for name, nominal in reference_peaks:
        idx = spec.axis.window_indices(nominal + window_ppm, nominal - window_ppm)
        if idx.size < 3:
            prominences[name] = float("-inf")
            continue
        prom = float(mag[idx].max() - np.median(mag[idx]))
        prominences[name] = prom
        candidates.append((prom, name, nominal))
    candidates.sort(reverse=True)
    for prom, name, nominal in candidates:
        if prom <= 0:
            continue
        try:
            est_idx = jain_peak_location(spec, (nominal + window_ppm, nominal - window_ppm))
        except EdgePeakError:
            continue
        est_ppm = spec.axis.index_to_ppm(est_idx)
        return nominal - est_ppm, {"reference": name, "prominences": prominences}
    raise AlignmentError("no prominent reference peak for B0 alignment",
                         prominences=prominences)


def align_b0(acqs: AcquisitionSet, reference_peaks=REFERENCE_PEAKS,
             window_ppm: float = REFERENCE_WINDOW_PPM) -> AcquisitionSet:
    """Apply one estimated shift uniformly to OFF, ON and DIFF.

    DIFF is recomputed from the shifted OFF/ON pair when both are
    present, otherwise shifted directly.
    """
    shift, _info = estimate_b0_shift(acqs, reference_peaks, window_ppm)
    off = shift_spectrum(acqs.off, shift)
    on = shift_spectrum(acqs.on, shift) if acqs.on is not None else None
    if acqs.diff is not None:
        diff = compute_diff(off, on) if on is not None else shift_spectrum(acqs.diff, shift)
    else:
        diff = None
    return AcquisitionSet(off=off, on=on, diff=diff)


def apply_window(spec: Spectrum, kind: Optional[str]) -> Spectrum:
    """Optional time-domain amplitude window; disabled by default.

    Windowing did not improve downstream performance on this data, so
    the pipeline keeps it as an explicit opt-in. The decaying half of
    the named window is applied to the FID.
    """
    if kind is None:
        return spec
    n = spec.axis.n_points
    if kind == "hamming":
        window = np.hamming(2 * n)[n:]
    elif kind == "hanning":
        window = np.hanning(2 * n)[n:]
    else:
        raise ConfigError(f"unknown window {kind!r} (hamming or hanning)")
    fid = ifft_spectrum(spec)
    return fft_fid(Fid(fid.samples * window, fid.dwell_time), spec.axis,
                   spec.acquisition, dict(spec.provenance))


def phase_correct(spec: Spectrum, enabled: bool = False) -> Spectrum:
    """Optional constant+linear phase correction; disabled by default.

    Estimates the two phase terms by minimising the total imaginary
    magnitude. Kept as an opt-in pass-through: it brought no measurable
    gain for training, matching the pipeline's default behaviour.
    """
    if not enabled:
        return spec
    f_norm = np.linspace(-1.0, 1.0, spec.axis.n_points)

    def imag_power(phi):
        rotated = spec.values * np.exp(1j * (phi[0] + phi[1] * f_norm))
        return float(np.sum(np.abs(rotated.imag)))

    best = min((minimize(imag_power, start, method="Nelder-Mead")
                for start in ([0.0, 0.0], [np.pi / 2, 0.0], [-np.pi / 2, 0.0])),
               key=lambda r: r.fun)
    phi0, phi1 = best.x
    values = spec.values * np.exp(1j * (phi0 + phi1 * f_norm))
    # keep the dominant peak positive-absorption
    k = int(np.argmax(np.abs(values)))
    if values[k].real < 0:
        values = -values
    prov = dict(spec.provenance)
    prov["phase_correction"] = (float(phi0), float(phi1))
    return spec.with_values(values, provenance=prov)


def crop_resample(spec: Spectrum, band: Tuple[float, float] = EXPORT_BAND_PPM,
                  n_points: int = EXPORT_POINTS) -> Spectrum:
    """Restrict to a ppm band on a uniform descending grid of ``n_points``."""
    high, low = max(band), min(band)
    axis = spec.axis
    ppm = axis.ppm
    if high > ppm[0] + 1e-9 or low < ppm[-1] - 1e-9:
        raise DomainError(
            f"band [{high}, {low}] ppm exceeds axis range [{ppm[0]:.3f}, {ppm[-1]:.3f}]")
    new_axis = PpmAxis.uniform_band(high, low, n_points, axis.spectrometer_freq)
    # interpolate against ascending frequency; new ppm -> old-frame freq
    f_query = (axis.center_ppm - new_axis.ppm) * axis.spectrometer_freq
    f = axis.frequencies
    values = (np.interp(f_query, f, spec.values.real)
              + 1j * np.interp(f_query, f, spec.values.imag))
    return Spectrum(values, new_axis, spec.acquisition, dict(spec.provenance))


def normalise_amplitude(acqs: AcquisitionSet) -> AcquisitionSet:
    """Scale all members by 1/max|OFF|, or the global maximum if OFF is absent."""
    if acqs.off is not None:
        peak = float(np.max(np.abs(acqs.off.values)))
    else:
        peak = max(float(np.max(np.abs(s.values))) for s in acqs.present())
    if peak == 0.0:
        raise NormalisationError("cannot normalise an all-zero acquisition set")
    return acqs.map_values(lambda v, s: v / peak)


def export_input(acqs: AcquisitionSet, cfg: ExportConfig) -> ModelInput:
    """Crop, normalise and stack the requested channels.

    Channels are ordered acquisition-major, datatype-minor in canonical
    order; the export is bit-stable for identical inputs.
    """
    for acq in cfg.acquisitions:
        if acqs.get(acq) is None:
            raise ExportError(f"acquisition {acq} requested but not present")
    high, low = cfg.ppm_band
    cropped = AcquisitionSet(
        off=None if acqs.off is None else crop_resample(acqs.off, (high, low), cfg.n_points),
        on=None if acqs.on is None else crop_resample(acqs.on, (high, low), cfg.n_points),
        diff=None if acqs.diff is None else crop_resample(acqs.diff, (high, low), cfg.n_points))
    normalised = normalise_amplitude(cropped)
    rows = []
    for acq, datatype in cfg.channel_labels:
        values = normalised.get(acq).values
        if datatype == "real":
            rows.append(values.real)
        elif datatype == "imaginary":
            rows.append(values.imag)
        else:
            rows.append(np.abs(values))
    return ModelInput(np.stack(rows), cfg.channel_labels, normalised.axis)


def normalise_target(raw, mode: str, metabolites: Tuple[str, ...] = ()) -> TargetVector:
    """Sum- or max-normalise a nonnegative concentration vector."""
    if isinstance(raw, ConcentrationVector):
        values = raw.values
        metabolites = metabolites or raw.metabolites
    else:
        values = np.asarray(raw, dtype=np.float64)
    if np.any(values < 0):
        raise DomainError("concentrations must be nonnegative")
    denom = values.sum() if mode == "sum" else values.max()
    if denom == 0:
        raise NormalisationError("cannot normalise an all-zero concentration vector")
    return TargetVector(values / denom, mode, tuple(metabolites))


def preprocess_export(acqs: AcquisitionSet, cfg: ExportConfig, *,
                      water: bool = False, align: bool = True,
                      window: Optional[str] = None,
                      phase: bool = False) -> ModelInput:
    """Full pipeline for one measurement.

    Order: optional windowing and phase correction (both pass-throughs
    by default), water attenuation, B0 alignment, then crop, normalise
    and channel export.
    """
    if window is not None or phase:
        acqs = acqs.map_values(
            lambda v, s: phase_correct(apply_window(s, window), phase).values)
    if water:
        acqs = acqs.map_values(lambda v, s: attenuate_water(s).values)
    if align:
        acqs = align_b0(acqs)
    return export_input(acqs, cfg)
