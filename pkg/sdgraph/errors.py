"""Exception hierarchy shared by every stage."""
from typing import Final, Iterable

EXIT_OK: Final[int] = 0
EXIT_INPUT_ERROR: Final[int] = 1
EXIT_INVARIANT_VIOLATION: Final[int] = 2


class SdgError(Exception):
    """Base class for all engine errors."""


class InputError(SdgError):
    """A user-supplied file or value failed to parse or validate."""


class InvariantViolation(SdgError):
    """An internal invariant did not hold."""


class ConfigError(InputError):
    pass


class TaxonomyError(InputError):
    pass


class InvalidData(InputError):
    pass


class MissingSceneDetection(InputError):
    """Training images without a scene detection tuple."""

    def __init__(self, image_ids: Iterable[str]):
        self.image_ids = sorted(image_ids)
        super().__init__(
            f"No scene detections for images: {', '.join(self.image_ids)}"
        )


class MissingGold(InputError):
    def __init__(self, image_ids: Iterable[str]):
        self.image_ids = sorted(image_ids)
        super().__init__(f"No gold annotations for images: {', '.join(self.image_ids)}")


class UnknownLabel(SdgError, LookupError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"Unknown taxonomy label: {label!r}")


class UnknownNode(SdgError, LookupError):
    pass


class UnknownEntity(SdgError, LookupError):
    pass


class UnknownScene(SdgError, LookupError):
    pass


class UnknownVariable(SdgError, LookupError):
    pass


class EmptyAfterNormalization(SdgError, ValueError):
    pass


class UnparseablePhrase(SdgError, ValueError):
    pass


class EmptyQuery(SdgError, ValueError):
    pass


class NoScene(SdgError, ValueError):
    pass


class TooLarge(SdgError, ValueError):
    pass


class ZeroProbabilityEvidence(SdgError, ArithmeticError):
    pass
