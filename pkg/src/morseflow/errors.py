"""Exception hierarchy for morseflow."""


class MorseflowError(Exception):
    """Base class for all morseflow errors."""


class ConfigurationError(MorseflowError, ValueError):
    """Invalid grid, box, partition, schedule or scenario configuration."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems) if problems else [message]


class HorizonError(MorseflowError):
    """A time was requested outside the stored noise horizon."""


class DomainError(MorseflowError, ValueError):
    """A state point lies outside the state box."""


class EmptySetError(MorseflowError, ValueError):
    """An operation needs a nonempty cell set."""


class PartitionMismatchError(MorseflowError, ValueError):
    """Cell sets live on different partitions."""


class MisuseError(MorseflowError):
    """A documented precondition of an analysis was violated."""


class FiltrationError(MorseflowError):
    """Attractor filtration is not strictly nested.

    ``witnesses`` holds the offending cell indices.
    """

    def __init__(self, message, witnesses=()):
        super().__init__(message)
        self.witnesses = tuple(witnesses)
