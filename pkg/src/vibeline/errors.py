"""Exception types shared across the package.

The CLI maps these onto process exit codes (see cli.py), so new error
conditions should reuse one of the families below instead of raising a
bare Exception.
"""


class VibelineError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(VibelineError, ValueError):
    """A parameter or field violates a documented precondition."""


class FormatError(VibelineError, ValueError):
    """A binary file does not parse (bad magic, malformed header)."""


class SizeMismatchError(FormatError):
    """Header promises more payload than the file actually contains."""


class BoundsError(VibelineError, IndexError):
    """A pixel coordinate lies outside the image."""


class GeometryError(VibelineError):
    """A line or segment does not intersect the image rectangle."""


class NoDetectionError(VibelineError):
    """An all-zero channel (or similar degenerate input) has no argmax."""


class NoTipError(NoDetectionError):
    """The along-line profile has no above-threshold run."""
