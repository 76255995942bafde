"""Exception types shared across the package."""


class GqmuError(Exception):
    """Base class for all errors raised by this package."""


class InputError(GqmuError, ValueError):
    """An argument was rejected (wrong shape, wrong sign, wrong range)."""


class ConfigError(GqmuError, ValueError):
    """A configuration is inconsistent or unsupported."""


class SolverError(GqmuError, RuntimeError):
    """A linear solve or optimization step failed."""


class FormatError(GqmuError, ValueError):
    """A file did not match its declared format.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ProtocolError(GqmuError, ValueError):
    """The evaluation protocol was given unusable inputs."""


class MetricError(GqmuError, ValueError):
    """A metric is undefined for the given inputs."""


class DegenerateDataError(GqmuError, ValueError):
    """Data does not carry enough structure for the requested operation."""


class ContractError(GqmuError, ValueError):
    """A pluggable component violated its interface contract."""


class TrainingDiverged(GqmuError, RuntimeError):
    """Prior training produced a non-finite loss.

    ``iteration`` reports the step at which divergence was detected.
    """

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
