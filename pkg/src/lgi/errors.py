"""Exception types shared across the library."""


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class EmptyAxis(ValueError):
    """Reduction requested over an axis of size zero."""


class EvenKernel(ValueError):
    """Same-padded temporal convolution requires an odd kernel width."""


class NonScalarLoss(ValueError):
    """backward() was called on a tensor that is not a scalar."""


class NonFiniteValue(ArithmeticError):
    """A probed function produced NaN or infinity."""


class EmptyQuery(ValueError):
    """Query encoding received an empty token sequence."""


class NInvalid(ValueError):
    """Phrase extraction requires at least one step."""


class EmptyGuide(ValueError):
    """Attention guidance received a guide vector with no active segment."""


class LengthMismatch(ValueError):
    """Prediction and ground-truth lists differ in length."""


class EmptyDataset(ValueError):
    """An operation that needs at least one sample received none."""


class FormatError(ValueError):
    """A serialized artifact (feature blob, checkpoint, ...) is malformed."""


class InvariantViolation(ValueError):
    """A loaded sample violates a documented data invariant."""


class ConfigInvalid(ValueError):
    """A configuration value is out of its documented range."""


class NonFiniteGradient(ArithmeticError):
    """An optimizer step encountered a NaN/Inf gradient."""
