"""Exception and warning classes raised across the package."""


class FmaeLabError(Exception):
    """Base class for all errors raised by fmae_lab."""


class SilentInput(FmaeLabError, ValueError):
    """A signal with zero L2 norm was given where a level is required."""


class InputTooShort(FmaeLabError, ValueError):
    pass


class UnsupportedAudio(FmaeLabError, ValueError):
    """WAV content we refuse to ingest (multichannel, odd sample formats)."""


class MismatchedLengths(FmaeLabError, ValueError):
    pass


class UnknownTemplate(FmaeLabError, KeyError):
    pass


class RateMismatch(FmaeLabError, ValueError):
    pass


class NotInCorpus(FmaeLabError, KeyError):
    pass


class EmptyLevelSet(FmaeLabError, ValueError):
    pass


class DegenerateChannel(FmaeLabError, ValueError):
    """A channel is silent for every signal at some level."""


class NonPositiveEntry(FmaeLabError, ValueError):
    pass


class ShapeMismatch(FmaeLabError, ValueError):
    pass


class ChannelMismatch(FmaeLabError, ValueError):
    pass


class BadLength(FmaeLabError, ValueError):
    pass


class NoForwardCache(FmaeLabError, RuntimeError):
    pass


class DivergenceDetected(FmaeLabError, RuntimeError):
    pass


class ConfigMismatch(FmaeLabError, ValueError):
    pass


class MissingWeightTable(FmaeLabError, ValueError):
    pass


class CorpusOverlap(FmaeLabError, ValueError):
    pass


class AxisMismatch(FmaeLabError, ValueError):
    pass


class NyquistViolation(FmaeLabError, ValueError):
    pass


class EmptyEvaluation(FmaeLabError, ValueError):
    pass


class DigestMismatch(FmaeLabError, ValueError):
    """Stored digest does not match the content it describes."""


class BadConfig(FmaeLabError, ValueError):
    pass


class SilentTargetChannel(UserWarning):
    """Emitted when a target channel has zero energy and its SER is undefined."""
