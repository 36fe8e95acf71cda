"""Exception hierarchy shared by all hdnn modules."""


class HdnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(HdnnError):
    """Operand shapes are incompatible; the message names both shapes."""


class DomainError(HdnnError):
    """Input outside the mathematical domain of the operation (e.g. log of <= 0)."""


class ParameterError(HdnnError):
    """A scalar argument or option is invalid (non-positive temperature, empty data, ...)."""


class ConfigError(HdnnError):
    """Model / gate / training configuration is invalid or used inconsistently."""


class NumericError(HdnnError):
    """A non-finite value appeared where the contract guarantees finite output."""


class ConsistencyError(HdnnError):
    """Two structures that must match (params vs. trace, frame counts, ...) do not."""


class StructureError(HdnnError):
    """A lattice or path violates its structural invariants."""


class CapacityError(HdnnError):
    """A guard limit was exceeded (e.g. brute-force path enumeration)."""


class FormatError(HdnnError):
    """An on-disk file is malformed; messages include the byte or line offset."""
