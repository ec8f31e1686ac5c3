"""Fundamental signal types and transforms.

Time-domain FIDs and frequency-domain spectra are complex float64
throughout; real/imaginary/magnitude views are derived only at export.
The Fourier pair is unitary (norm="ortho") so round trips are exact to
machine precision and noise keeps the same standard deviation in both
domains.

ppm convention: ppm(bin) = center_ppm - f_Hz / spectrometer_freq_MHz,
stored in ascending-frequency order, i.e. strictly descending ppm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .defaults import ACQUISITIONS, CENTER_PPM, DIFF, SPECTROMETER_FREQ_MHZ
from .errors import DimensionError, DomainError


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Fid:
    """Complex time-domain signal with its sampling interval."""

    samples: np.ndarray
    dwell_time: float

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples, np.complex128))
        if self.samples.ndim != 1 or self.n_samples < 2:
            raise DimensionError("FID needs a 1-D array of at least 2 samples")
        if not self.dwell_time > 0:
            raise DomainError(f"dwell_time must be positive, got {self.dwell_time}")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dwell_time

    @property
    def bandwidth(self) -> float:
        return 1.0 / self.dwell_time


@dataclass(frozen=True)
class PpmAxis:
    """Uniform chemical-shift axis.

    ``bin0_freq`` is the frequency (Hz) of stored bin 0. The default is
    the fftshift convention, -(n//2) * bandwidth/n, which puts the
    zero-frequency bin at index n//2. Cropped/resampled axes instead use
    ``bin0_freq = 0`` so that ``center_ppm`` is the ppm of bin 0.
    """

    spectrometer_freq: float = SPECTROMETER_FREQ_MHZ
    center_ppm: float = CENTER_PPM
    n_points: int = 2048
    bandwidth: float = 2000.0
    bin0_freq: Optional[float] = None

    def __post_init__(self):
        if self.n_points < 2:
            raise DimensionError("axis needs at least 2 points")
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        if not self.spectrometer_freq > 0:
            raise DomainError("spectrometer frequency must be positive")
        if self.bin0_freq is None:
            step = self.bandwidth / self.n_points
            object.__setattr__(self, "bin0_freq", -(self.n_points // 2) * step)

    @classmethod
    def for_fid(cls, fid: Fid, spectrometer_freq=SPECTROMETER_FREQ_MHZ,
                center_ppm=CENTER_PPM) -> "PpmAxis":
        return cls(spectrometer_freq=spectrometer_freq, center_ppm=center_ppm,
                   n_points=fid.n_samples, bandwidth=fid.bandwidth)

    @classmethod
    def uniform_band(cls, high_ppm: float, low_ppm: float, n_points: int,
                     spectrometer_freq=SPECTROMETER_FREQ_MHZ) -> "PpmAxis":
        """Axis for a cropped band: bin 0 at ``high_ppm``, descending."""
        if not high_ppm > low_ppm:
            raise DomainError("band must satisfy high > low")
        step_hz = (high_ppm - low_ppm) / (n_points - 1) * spectrometer_freq
        return cls(spectrometer_freq=spectrometer_freq, center_ppm=high_ppm,
                   n_points=n_points, bandwidth=step_hz * n_points, bin0_freq=0.0)

    @property
    def freq_step(self) -> float:
        return self.bandwidth / self.n_points

    @property
    def frequencies(self) -> np.ndarray:
        """Offset frequencies in Hz, ascending along storage order."""
        return self.bin0_freq + np.arange(self.n_points) * self.freq_step

    @property
    def ppm(self) -> np.ndarray:
        """ppm values, strictly descending along storage order."""
        return self.center_ppm - self.frequencies / self.spectrometer_freq

    def ppm_to_index(self, ppm_value: float) -> float:
        """Fractional bin index of a ppm value (may fall outside the axis)."""
        f = (self.center_ppm - ppm_value) * self.spectrometer_freq
        return (f - self.bin0_freq) / self.freq_step

    def index_to_ppm(self, index: float) -> float:
        f = self.bin0_freq + index * self.freq_step
        return self.center_ppm - f / self.spectrometer_freq

    def window_indices(self, high_ppm: float, low_ppm: float) -> np.ndarray:
        """Indices of bins whose ppm lies within [low, high]."""
        ppm = self.ppm
        return np.nonzero((ppm <= high_ppm) & (ppm >= low_ppm))[0]

    def matches(self, other: "PpmAxis", rtol=1e-9) -> bool:
        return (self.n_points == other.n_points
                and np.isclose(self.spectrometer_freq, other.spectrometer_freq, rtol=rtol)
                and np.isclose(self.center_ppm, other.center_ppm, rtol=rtol, atol=1e-12)
                and np.isclose(self.bandwidth, other.bandwidth, rtol=rtol)
                and np.isclose(self.bin0_freq, other.bin0_freq, rtol=rtol, atol=1e-9))


@dataclass(frozen=True)
class Spectrum:
    """Complex frequency-domain signal on a ppm axis."""

    values: np.ndarray
    axis: PpmAxis
    acquisition: str = "OFF"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.complex128))
        if self.values.shape != (self.axis.n_points,):
            raise DimensionError(
                f"values length {self.values.shape} does not match axis "
                f"n_points {self.axis.n_points}")
        if self.acquisition not in ACQUISITIONS:
            raise DomainError(f"unknown acquisition {self.acquisition!r}")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def with_values(self, values, acquisition=None, provenance=None) -> "Spectrum":
        return Spectrum(values, self.axis,
                        self.acquisition if acquisition is None else acquisition,
                        dict(self.provenance) if provenance is None else provenance)

    def scaled(self, factor: float) -> "Spectrum":
        return self.with_values(self.values * factor)


@dataclass(frozen=True)
class AcquisitionSet:
    """The OFF/ON/DIFF spectra of one measurement; members share one axis."""

    off: Optional[Spectrum] = None
    on: Optional[Spectrum] = None
    diff: Optional[Spectrum] = None

    def __post_init__(self):
        members = self.present()
        if not members:
            raise DimensionError("acquisition set needs at least one member")
        axis = members[0].axis
        for m in members[1:]:
            if not axis.matches(m.axis):
                raise DimensionError("acquisition set members must share one axis")

    def present(self) -> list:
        return [s for s in (self.off, self.on, self.diff) if s is not None]

    def get(self, acquisition: str) -> Optional[Spectrum]:
        return {"OFF": self.off, "ON": self.on, "DIFF": self.diff}[acquisition]

    @property
    def axis(self) -> PpmAxis:
        return self.present()[0].axis

    def map_values(self, fn) -> "AcquisitionSet":
        """Apply ``fn(values, spectrum) -> values`` to every member."""
        def conv(s):
            return None if s is None else s.with_values(fn(s.values, s))
        return AcquisitionSet(off=conv(self.off), on=conv(self.on), diff=conv(self.diff))


def fft_fid(fid: Fid, axis_spec: PpmAxis, acquisition="OFF", provenance=None) -> Spectrum:
    """Unitary FFT of a FID onto a descending ppm axis."""
    if fid.n_samples != axis_spec.n_points:
        raise DimensionError(
            f"FID has {fid.n_samples} samples but axis has {axis_spec.n_points} points")
    if not np.isclose(fid.bandwidth, axis_spec.bandwidth, rtol=1e-9):
        raise DimensionError(
            f"FID bandwidth {fid.bandwidth:g} Hz does not match axis "
            f"bandwidth {axis_spec.bandwidth:g} Hz")
    values = np.fft.fftshift(np.fft.fft(fid.samples, norm="ortho"))
    return Spectrum(values, axis_spec, acquisition, provenance or {})


def ifft_spectrum(spec: Spectrum) -> Fid:
    """Inverse of :func:`fft_fid`."""
    samples = np.fft.ifft(np.fft.ifftshift(spec.values), norm="ortho")
    return Fid(samples, dwell_time=1.0 / spec.axis.bandwidth)


def apodize(fid: Fid, extra_fwhm: float) -> Fid:
    """Exponential envelope adding exactly ``extra_fwhm`` Hz of Lorentzian width.

    Sample k is scaled by exp(-pi * extra_fwhm * k * dwell_time); a line of
    width w becomes a line of width w + extra_fwhm.
    """
    if extra_fwhm < 0:
        raise DomainError(f"extra_fwhm must be >= 0, got {extra_fwhm}")
    if extra_fwhm == 0:
        return fid
    envelope = np.exp(-np.pi * extra_fwhm * fid.times)
    return Fid(fid.samples * envelope, fid.dwell_time)


def zero_fill_or_truncate(fid: Fid, target_len: int) -> Fid:
    """Pad with trailing zeros or keep the prefix, to exactly ``target_len``."""
    if target_len < 2:
        raise DimensionError("target length must be at least 2")
    n = fid.n_samples
    if target_len == n:
        return fid
    if target_len < n:
        return Fid(fid.samples[:target_len], fid.dwell_time)
    out = np.zeros(target_len, dtype=np.complex128)
    out[:n] = fid.samples
    return Fid(out, fid.dwell_time)


def compute_diff(off: Spectrum, on: Spectrum) -> Spectrum:
    """Pointwise ON - OFF, tagged DIFF, carrying both parents' provenance."""
    if not off.axis.matches(on.axis):
        raise DimensionError("OFF and ON spectra must share one axis")
    provenance = {"off": dict(off.provenance), "on": dict(on.provenance)}
    return Spectrum(on.values - off.values, off.axis, DIFF, provenance)
