"""Exception types shared across the package.

Every error raised on purpose derives from AnomlabError so callers (and the
CLI) can map failures to stable exit codes without string matching.
"""


class AnomlabError(Exception):
    """Base class for all package-specific errors."""


class UnknownDevice(AnomlabError):
    """A reading references a device id that is not in the catalog."""


class FormatViolation(AnomlabError):
    """A reading value does not conform to its device's value format."""


class EmptyCatalog(AnomlabError):
    """A generator was asked to produce data for an empty device catalog."""


class DeviceNotFound(AnomlabError):
    """The requested target device has no readings in the dataset."""


class IncompatibleKind(AnomlabError):
    """The anomaly kind cannot be injected into the target device's format."""


class InsufficientData(AnomlabError):
    """The target device has too few readings to anchor an injection."""


class EmptyWindow(AnomlabError):
    """A sliced window holds fewer readings than the pipeline needs."""


class NonFiniteLoss(AnomlabError):
    """Training produced a NaN or infinite loss and was aborted."""


class KTooLarge(AnomlabError):
    """k exceeds what the training set can support for neighbor scoring."""


class InsufficientSpan(AnomlabError):
    """The dataset does not span enough time for the requested windows."""


class EmptyEvaluation(AnomlabError):
    """Accuracy was requested over zero classified samples."""


class ConfigError(AnomlabError):
    """A configuration file or flag value is invalid."""
