"""Shared physical defaults and numeric tolerances.

Everything here is a convention of this package, overridable per call;
keeping the constants in one place makes runs reproducible and the
tolerances auditable.
"""
from dataclasses import dataclass

# 3 T proton scanner context used for synthetic axes.
SPECTROMETER_FREQ_MHZ = 123.25
CENTER_PPM = 4.7

# Canonical metabolite order used everywhere (targets, bases, reports).
METABOLITES = ("NAA", "Cr", "GABA", "Glu", "Gln")

# Acquisition labels.
OFF = "OFF"
ON = "ON"
DIFF = "DIFF"
ACQUISITIONS = (OFF, ON, DIFF)

# Channel datatypes exported to models.
DATATYPES = ("real", "imaginary", "magnitude")

# Reference peaks for frequency alignment: (name, ppm), searched in a
# +-0.25 ppm window; the more prominent one wins.
REFERENCE_PEAKS = (("NAA", 2.01), ("Cr", 3.015))
REFERENCE_WINDOW_PPM = 0.25

# Water attenuation window and outlier threshold.
WATER_CENTER_PPM = 4.75
WATER_HALF_WIDTH_PPM = 0.75
WATER_CLAMP_FACTOR = 3.0

# Harmonised export band and resolution.
EXPORT_BAND_PPM = (4.5, 1.0)
EXPORT_POINTS = 2048


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances for invariants checked by this package."""

    fft_roundtrip: float = 1e-10
    apodize_compose: float = 1e-12
    linearity: float = 1e-12
    identity_resample: float = 1e-12
    gp_oracle: float = 1e-8
    lls_recovery: float = 1e-8
    grad_check_rel: float = 1e-4
    grad_check_step: float = 1e-5


TOL = Tolerances()
