"""
Error types shared across the speaker-recognition pipeline.

Every public precondition failure raises one of these, so callers can catch
``SpeakerRecognitionError`` to handle any pipeline rejection.
"""

from typing import Iterable, List, Optional


class SpeakerRecognitionError(Exception):
    """Base class for all pipeline errors."""


class AudioFormatError(SpeakerRecognitionError, ValueError):
    """A WAV file has an unsupported sample rate, channel count or encoding."""


class TrialFormatError(SpeakerRecognitionError, ValueError):
    """A trial-list line could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ShapeError(SpeakerRecognitionError, ValueError):
    """Array or tensor shapes violate an operation's contract."""


class CorpusError(SpeakerRecognitionError, ValueError):
    """The corpus cannot satisfy a request (too small, unknown utterance)."""


class ProblemListError(SpeakerRecognitionError, ValueError):
    """An error carrying every problem found, not just the first one."""

    def __init__(self, problems: Iterable[str], header: str):
        self.problems: List[str] = list(problems)
        lines = "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(f"{header} ({len(self.problems)} problem(s)):\n{lines}")


class ConfigError(ProblemListError):
    """Configuration validation failed."""

    def __init__(self, problems: Iterable[str]):
        super().__init__(problems, "invalid configuration")


class WeightManifestError(ProblemListError):
    """A weight manifest does not match the parameter store."""

    def __init__(self, problems: Iterable[str]):
        super().__init__(problems, "weight manifest mismatch")


class DivergenceError(SpeakerRecognitionError, RuntimeError):
    """A loss or gradient became non-finite."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message)


class GradientCheckError(SpeakerRecognitionError, RuntimeError):
    """A gradient check met a non-finite value."""

    def __init__(self, message: str, coordinate: Optional[tuple] = None):
        self.coordinate = coordinate
        super().__init__(message)
