"""Exception hierarchy shared by every clgnet module."""


class CLGNetError(Exception):
    """Base class for all errors raised by clgnet."""


class DimensionError(CLGNetError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigurationError(CLGNetError, ValueError):
    """Hyper-parameters describe an impossible layer, mask or run."""


class ContractError(CLGNetError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericError(CLGNetError, ArithmeticError):
    """A NaN or Inf appeared in a forward or backward computation."""


class IntegrityError(CLGNetError, IOError):
    """A serialized file is truncated, corrupt or of the wrong kind."""
