"""Exception hierarchy shared across the package."""


class MegaquantError(Exception):
    """Base class for all package errors."""


class DimensionError(MegaquantError, ValueError):
    """Array lengths, shapes or axes do not match."""


class DomainError(MegaquantError, ValueError):
    """Argument outside its valid domain (negative widths, bad ranges, ...)."""


class CapabilityError(MegaquantError):
    """Request exceeds what the implementation supports."""


class EdgePeakError(MegaquantError):
    """Peak located on the boundary of a search window."""


class AlignmentError(MegaquantError):
    """Frequency alignment failed; carries the reference-peak prominences."""

    def __init__(self, message, prominences=None):
        super().__init__(message)
        self.prominences = prominences


class NormalisationError(MegaquantError, ValueError):
    """Amplitude or target normalisation is undefined for the input."""


class ExportError(MegaquantError):
    """Channel export cannot be satisfied (missing acquisition, ...)."""


class ConfigError(MegaquantError, ValueError):
    """Invalid model, synthesis or run configuration."""


class TrainingError(MegaquantError):
    """Non-finite loss or gradients during training; carries context."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ConditioningError(MegaquantError):
    """Numerically degenerate linear system; carries a condition estimate."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ContractError(MegaquantError):
    """Caller violated a cross-module contract (normalisation modes, orders)."""


class StateError(MegaquantError):
    """Operation requested in the wrong order (e.g. backward before forward)."""


class DegenerateDataError(MegaquantError, ValueError):
    """Statistical procedure undefined for the given data."""


class ArchiveError(MegaquantError):
    """File-format level failure."""


class ChecksumError(ArchiveError):
    """Payload bytes do not match the manifest checksum."""


class VersionError(ArchiveError):
    """Archive was written by an unknown format version."""
