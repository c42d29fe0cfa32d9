"""Exception hierarchy.

Errors split into two families so the command line can map them to exit
codes: :class:`ConfigError` (bad usage, settings or simulation inputs, exit 1) and
:class:`DataError` (the inputs cannot be evaluated, exit 2).
"""


class DriftLabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DriftLabError, ValueError):
    """Invalid configuration, parameters or simulation settings."""


class DataError(DriftLabError, ValueError):
    """Input data violates an invariant or cannot be evaluated."""


# observation validation
class NonPositiveIr(DataError):
    pass


class NonFinite(DataError):
    pass


class MissingSignal(DataError):
    pass


class ImplausibleTemperature(DataError):
    pass


class NegativeReference(DataError):
    pass


class UnorderedTimestamps(DataError):
    pass


class InconsistentPresence(DataError):
    pass


# ingestion
class MissingColumn(DataError):
    pass


class EmptyFile(DataError):
    pass


class MalformedHeader(DataError):
    pass


class NoOverlap(DataError):
    pass


class EmptySeries(DataError):
    pass


class EmptyAfterFiltering(DataError):
    pass


# sensor model
class NonPhysicalTemperature(DataError):
    pass


class DegenerateWindow(DataError):
    pass


# density / resampling
class EmptyInput(DataError):
    pass


class ZeroWeightSum(DataError):
    pass


class OriginalZeroAtPoint(DataError):
    pass


# synthesis / cli
class InvalidSpec(ConfigError):
    pass


class IoFailure(DriftLabError, OSError):
    pass
