"""Exception types raised across the package."""


class So3ObsError(Exception):
    """Base class for all errors raised by so3obs."""


class NonSkewInput(So3ObsError, ValueError):
    pass


class AsymmetricG(So3ObsError, ValueError):
    pass


class NonUnitDirection(So3ObsError, ValueError):
    pass


class LengthMismatch(So3ObsError, ValueError):
    pass


class NotARotation(So3ObsError, ValueError):
    pass


class RankDeficient(So3ObsError, ValueError):
    """Reference set does not keep the second eigenvalue of G away from zero."""


class InfeasibleGains(So3ObsError, ValueError):
    pass


class InvalidCertificate(So3ObsError, ValueError):
    pass


class StepTooLarge(So3ObsError, RuntimeError):
    pass


class ParseError(So3ObsError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotoneTime(ParseError):
    pass


class ConfigError(So3ObsError, ValueError):
    pass
