"""Exception hierarchy.

The CLI maps these onto its exit-code contract: ValidationError, ParseError,
ConfigError and GenerationError exit 1; OS-level IO failures exit 2.
"""


class PalmforgeError(Exception):
    """Base class for all palmforge errors."""


class ValidationError(PalmforgeError):
    """A value violates a domain invariant (box out of range, bad confidence...)."""


class ParseError(PalmforgeError):
    """A text input could not be parsed. Carries the 1-based line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class ConfigError(PalmforgeError):
    """A configuration file or pool layout is unusable."""


class GenerationError(PalmforgeError):
    """Dataset generation could not satisfy its contract (e.g. strict counts)."""


class EmptySpriteError(ValidationError):
    """A sprite raster has no pixel with alpha > 0."""


class DegenerateTransformError(ValidationError):
    """A transform scales a sprite down to zero pixels."""


class OutOfBoundsError(ValidationError):
    """A placement does not fit inside the host raster."""


class SpriteTooLargeError(GenerationError):
    """A transformed sprite exceeds the output raster size."""


class EmptyEvaluationError(PalmforgeError):
    """No class was evaluable (no ground truth anywhere)."""
