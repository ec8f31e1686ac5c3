"""Shared measurement helpers for the test suite."""
from __future__ import annotations

import numpy as np

from megaquant.spectra import Fid, PpmAxis, fft_fid, zero_fill_or_truncate


def measure_fwhm_hz(fid: Fid, zero_fill: int = 8) -> float:
    """Full width at half maximum of a single line, in Hz.

    Measured by half-maximum crossings of the absorption (real) part on
    a finely zero-filled spectrum; valid for zero-phase single lines.
    """
    padded = zero_fill_or_truncate(fid, fid.n_samples * zero_fill)
    spec = fft_fid(padded, PpmAxis.for_fid(padded))
    real = spec.values.real
    k = int(np.argmax(real))
    half = real[k] / 2.0

    def crossing(direction: int) -> float:
        j = k
        while 0 < j < len(real) - 1 and real[j + direction] > half:
            j += direction
        a, b = real[j], real[j + direction]
        frac = (a - half) / (a - b) if a != b else 0.0
        return j + direction * frac

    width_bins = crossing(+1) - crossing(-1)
    return float(width_bins * spec.axis.freq_step)


def single_line_fid(n: int, bandwidth: float, freq_hz: float = 0.0,
                    amplitude: float = 1.0) -> Fid:
    t = np.arange(n) / bandwidth
    return Fid(amplitude * np.exp(2j * np.pi * freq_hz * t), 1.0 / bandwidth)


def star_discrepancy_estimate(points: np.ndarray, n_boxes: int = 2000,
                              seed: int = 0) -> float:
    """Lower bound on the star discrepancy via random anchored boxes."""
    rng = np.random.default_rng(seed)
    n, d = points.shape
    worst = 0.0
    for _ in range(n_boxes):
        corner = rng.random(d)
        inside = np.all(points < corner, axis=1).mean()
        worst = max(worst, abs(inside - np.prod(corner)))
    return worst
