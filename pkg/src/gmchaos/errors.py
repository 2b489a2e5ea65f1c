"""Exception types shared across the package."""


class GmchaosError(Exception):
    """Base class for package errors."""


class SynthesisError(GmchaosError):
    """A Gaussian layer could not be synthesized (embedding and Cholesky both failed)."""


class SequencingError(GmchaosError):
    """Layers applied out of order to a field state."""


class CorruptFieldError(GmchaosError):
    """Field values contain non-finite entries."""


class FormatError(GmchaosError):
    """A snapshot or mask file has a bad magic, version, or length."""


class ResolutionError(GmchaosError):
    """Requested boxes or scales are below the lattice resolution."""


class DegenerateSampleError(GmchaosError):
    """An estimator received a sample it cannot use (e.g. all-zero masses)."""


class InsufficientScalesError(GmchaosError):
    """A scaling fit needs more distinct scales than were provided."""


class ConfigError(GmchaosError):
    """Run configuration failed to parse or validate."""
