"""Domain errors raised across the paper-PUF toolkit."""


class PufError(Exception):
    """Base class for every domain error the toolkit raises."""


class ConstantInput(PufError, ValueError):
    """A correlation input has zero variance."""


class LengthMismatch(PufError, ValueError):
    """Two vectors that must pair up have different lengths."""


class DimensionMismatch(PufError, ValueError):
    """Maps, patches or codecs with incompatible dimensions."""


class InvalidParam(PufError, ValueError):
    """A parameter is outside its admissible range."""


class FormatError(PufError, ValueError):
    """A binary file or manifest could not be parsed."""


class AlignmentFailed(PufError):
    """Capture images could not be registered to the first image."""

    def __init__(self, message: str, image_index: int = -1, best_ncc: float = float("nan")):
        super().__init__(message)
        self.image_index = image_index
        self.best_ncc = best_ncc


class RankDeficientLights(PufError, ValueError):
    """Light directions do not span three dimensions."""


class NotAligned(PufError, ValueError):
    """A capture still carries misalignment that align() has not removed."""


class DuplicateId(PufError, ValueError):
    """A template id is already enrolled."""


class StorageFailure(PufError):
    """Reading or writing the template store failed."""


class UnknownId(PufError, KeyError):
    """No template is enrolled under the requested id."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown id"


class EmptyStore(PufError):
    """Verification was requested against a store with no templates."""


class InvalidStrength(PufError, ValueError):
    """A physical attack strength is outside (0, 1)."""


class InsufficientData(PufError, ValueError):
    """Too few samples to fit a model."""


class BudgetExhausted(PufError):
    """An attack used its whole query budget without reaching the threshold."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class DegenerateSimplex(PufError):
    """The Nelder-Mead simplex collapsed twice before reaching the threshold."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class InvalidQuery(PufError, ValueError):
    """A collision query violates d >= 1 or 0 < eps <= R."""


class InfeasibleEstimate(PufError, ValueError):
    """A Monte Carlo estimate would expect fewer than ten hits."""
