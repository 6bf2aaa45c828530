"""Exception hierarchy for mixtts.

Every error carries the process exit code the command layer maps it to:
- MixTTSError: generic failure (1)
- ConfigurationError: bad configuration or arguments (2)
- DataError: malformed or missing data (3)
- NumericError: numeric or verification failure (4)
"""
from typing import Optional


class MixTTSError(Exception):
    """Base class for all mixtts errors."""
    exit_code = 1


class ConfigurationError(MixTTSError, ValueError):
    """Invalid configuration, flags or model settings."""
    exit_code = 2


class DimensionError(ConfigurationError):
    """Tensor or state shapes that do not agree."""

    def __init__(self, message: str, *shapes: tuple):
        if shapes:
            message = f'{message}: ' + ' vs '.join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class DataError(MixTTSError, ValueError):
    """Input data that cannot be used."""
    exit_code = 3


class TooShortError(DataError):
    """Audio clip shorter than one analysis window."""


class EmptyClipError(DataError):
    """Clip with no samples above the silence threshold."""


class EmptyFeatureError(DataError):
    """Feature extraction produced no frames."""


class WavParseError(DataError):
    """Malformed or unsupported WAV file."""

    def __init__(self, chunk: str, message: str):
        super().__init__(f'[{chunk}] {message}')
        self.chunk = chunk


class ManifestError(DataError):
    """Manifest schema violation or dangling audio reference."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class UnknownTokenError(DataError):
    """Phoneme token missing from the inventory."""

    def __init__(self, token: str, position: int, language: str):
        super().__init__(
            f'unknown phoneme token {token!r} at position {position} '
            f'(active language {language})'
        )
        self.token = token
        self.position = position
        self.language = language


class FeatureCacheError(DataError):
    """Feature container with a bad header or payload."""


class EmbeddingIndexError(DataError, IndexError):
    """Embedding id outside the table."""

    def __init__(self, index: int, size: int):
        super().__init__(f'embedding id {index} out of range [0, {size})')
        self.index = index
        self.size = size


class NumericError(MixTTSError, ArithmeticError):
    """Non-finite values or failed numeric verification."""
    exit_code = 4


class VerificationError(NumericError):
    """A gradient or property check failed."""


class AutodiffError(MixTTSError):
    """Misuse of the autodiff tape."""
