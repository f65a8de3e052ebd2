"""Exception hierarchy shared by every module."""


class ProxGTError(Exception):
    """Base class for all library errors."""


class BadShape(ProxGTError, ValueError):
    pass


class ShapeMismatch(ProxGTError, ValueError):
    pass


class NotConnected(ProxGTError, ValueError):
    pass


class NotDoublyStochastic(ProxGTError, ValueError):
    pass


class SparsityMismatch(ProxGTError, ValueError):
    pass


class AsymmetricMatrix(ProxGTError, ValueError):
    pass


class NonFinite(ProxGTError, ValueError):
    pass


class OracleError(ProxGTError):
    pass


class MissingPrevIterate(OracleError):
    pass


class Diverged(ProxGTError, ArithmeticError):
    """Raised when an iterate leaves the divergence box.

    ``records`` holds whatever was logged before the blow-up.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


class InvariantViolation(ProxGTError, AssertionError):
    pass


class MissingConstant(ProxGTError, ValueError):
    pass


class ParseError(ProxGTError, ValueError):
    pass


class TooFewRows(ProxGTError, ValueError):
    pass


class ConfigError(ProxGTError, ValueError):
    pass


class UnknownKey(ConfigError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ConfigTypeError(ConfigError, TypeError):
    pass


class MissingRequired(ConfigError):
    pass
