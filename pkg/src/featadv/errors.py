"""Exception hierarchy shared across the toolkit.

Service handlers map these onto HTTP status codes; everything else raises
them directly.
"""


class FeatAdvError(Exception):
    """Base class for all toolkit errors."""


class InputError(FeatAdvError):
    """A caller-supplied value is out of range, mis-shaped, or non-finite."""


class ConfigurationError(FeatAdvError):
    """A config names something that does not exist or combines fields
    that cannot work together (unknown layer, mode/field mismatch)."""


class OptimizationError(FeatAdvError):
    """An optimization diverged beyond recovery.

    Carries the last finite loss value and the step at which the run gave
    up, so callers can report where things went wrong.
    """

    def __init__(self, message, step=None, last_loss=None):
        super().__init__(message)
        self.step = step
        self.last_loss = last_loss


class StoreError(FeatAdvError):
    """A store ref does not resolve or the store layout is damaged."""


class NotFoundError(StoreError):
    """Lookup by id failed."""
