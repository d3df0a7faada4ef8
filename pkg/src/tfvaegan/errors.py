"""Exception hierarchy shared across the package."""


class TFVAEGANError(Exception):
    """Base class for package errors."""


class FormatError(TFVAEGANError, ValueError):
    """A file or bundle does not follow its declared layout."""


class ValidationError(TFVAEGANError, ValueError):
    """A dataset violates one of its invariants."""


class ShapeError(TFVAEGANError, ValueError):
    """Tensor dimensions do not match the network they are fed to."""


class DomainError(TFVAEGANError, ValueError):
    """An input lies outside the domain of a loss or metric."""


class NumericError(TFVAEGANError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class GradientUnavailableError(TFVAEGANError, RuntimeError):
    """The critic cannot be differentiated with respect to its input."""


class StateError(TFVAEGANError, RuntimeError):
    """An operation was invoked on a model that lacks a required part."""


class CompatibilityError(TFVAEGANError, ValueError):
    """A checkpoint does not fit the data or configuration it is used with."""


class TrainingAborted(NumericError):
    """A loss became NaN/inf during training."""

    def __init__(self, term: str, iteration: int, value: float):
        super().__init__(f"loss term '{term}' became {value} at iteration {iteration}")
        self.term = term
        self.iteration = iteration
        self.value = value
