"""Exception types raised across the package.

Everything inherits from TelmosError so callers (and the CLI) can catch
package errors in one place; DivergenceError is kept distinct because it
maps to its own process exit code.
"""


class TelmosError(Exception):
    """Base class for all telmos errors."""


# --- audio ---------------------------------------------------------------

class AudioFormatError(TelmosError):
    """Malformed or truncated RIFF/WAVE container."""


class UnsupportedFormatError(AudioFormatError):
    """Valid container but an encoding we do not handle (non PCM16, >2 ch)."""


class EmptyAudioError(AudioFormatError):
    """Data chunk present but holds zero samples."""


class UnsupportedRateError(TelmosError):
    """Sample rate outside the supported set."""


class BoundsError(TelmosError, ValueError):
    """Requested window falls outside the clip (or value outside its range)."""


# --- dsp / dataprep ------------------------------------------------------

class TooShortError(TelmosError):
    """Signal shorter than the minimum the operation needs."""


class NoSpeechError(TelmosError):
    """Active speech level undefined (all-zero or silent input)."""


class DegenerateNoiseError(TelmosError):
    """Noise signal has zero power, SNR gain undefined."""


class NoActiveWindowError(TelmosError):
    """No sufficiently active window found within the attempt budget."""


class InvalidSplitError(TelmosError, ValueError):
    """Validation speaker count not smaller than the speaker population."""


class EmptyRatingsError(TelmosError, ValueError):
    """Rating list empty."""


class InvalidKError(TelmosError, ValueError):
    """Subsample size outside [1, len(ratings)]."""


class InsufficientBinError(TelmosError):
    """A MOS bin holds fewer labels than the draw size."""

    def __init__(self, msg, bin_index=None):
        super().__init__(msg)
        self.bin_index = bin_index


class ManifestError(TelmosError):
    """Manifest violates its invariants (duplicate ids, speaker overlap...)."""


# --- nn ------------------------------------------------------------------

class ShapeError(TelmosError, ValueError):
    """Tensor arguments have incompatible shapes."""


class DegenerateBatchError(TelmosError):
    """Train-mode batch statistics need at least two samples."""


class DivergenceError(TelmosError):
    """Training produced a non-finite loss."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class CheckpointFormatError(TelmosError):
    """Byte stream is not a valid checkpoint (magic/version/framing)."""


class IncompatibleCheckpointError(TelmosError):
    """Checkpoint parses but tensor names/shapes do not match the model."""

    def __init__(self, msg, tensor=None):
        super().__init__(msg)
        self.tensor = tensor


# --- eval / harness ------------------------------------------------------

class UndefinedCorrelationError(TelmosError):
    """Pearson correlation undefined for a constant vector."""


class DegenerateTestError(TelmosError):
    """Paired differences have zero variance, t statistic undefined."""


class MissingLabelError(TelmosError, LookupError):
    """A clip in the manifest has no MOS label."""


class InsufficientRatingsError(TelmosError):
    """A file has fewer ratings than the sweep needs."""


class InsufficientDataError(TelmosError):
    """Requested subsample exceeds the available data."""


class UsageError(TelmosError):
    """Bad command-line invocation."""
