"""Exception types. Each carries a stable ``code`` string used in CLI messages."""


class ErsError(Exception):
    code = "ERROR"


class ScenarioError(ErsError):
    """Raised by scenario loading; ``code`` is one of MISSING_FIELD, INVALID_VALUE, PARSE_ERROR."""

    def __init__(self, code: str, message: str, key: str | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.key = key


class InvalidGeometry(ErsError):
    code = "INVALID_GEOMETRY"


class ZeroSpeed(ErsError):
    code = "ZERO_SPEED"


class InvalidMix(ErsError):
    code = "INVALID_MIX"


class NegativeEnergy(ErsError):
    code = "NEGATIVE_ENERGY"


class UnknownProfile(ErsError):
    code = "UNKNOWN_PROFILE"


class DuplicateSession(ErsError):
    code = "DUPLICATE_SESSION"


class SessionClosed(ErsError):
    code = "SESSION_CLOSED"


class NegativeKwh(ErsError):
    code = "NEGATIVE_KWH"


class InsufficientHistory(ErsError):
    code = "INSUFFICIENT_HISTORY"
