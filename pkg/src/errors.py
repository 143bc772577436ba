"""
Exception hierarchy for the simulator. Everything raised on purpose derives from CovertFLError;
configuration-style failures also derive from ValueError so callers validating input can catch either.
"""


class CovertFLError(Exception):
    """Root of all simulator errors."""


class ConfigurationError(CovertFLError, ValueError):
    """Invalid spec, config, dimension mismatch or out-of-range argument."""


class CapacityExceededError(ConfigurationError):
    """Payload does not fit the channel for the configured rounds."""


class AggregationError(CovertFLError):
    """Empty update list or updates built from different model specs."""


class DegenerateFactorError(CovertFLError):
    """RMS factor came out as zero (all sampled weights are zero)."""


class IncompleteTransmissionError(CovertFLError):
    """Observation log does not cover every cycle of the transmission."""


class FramingError(CovertFLError, ValueError):
    """Bit count does not match what the codec expects."""


class PayloadError(CovertFLError, ValueError):
    """Payload content outside the codec alphabet (non 8-bit text, non-binary pixel, bad PBM)."""


class UndefinedSimilarityError(CovertFLError):
    """Cosine similarity requested for a zero-norm update."""


class InsufficientTraceError(CovertFLError):
    """Weight trace too short for the requested cycle hypotheses."""


class OutputError(CovertFLError):
    """Output directory cannot be created or written."""
