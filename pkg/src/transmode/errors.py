"""Exception hierarchy shared across the package."""


class TransmodeError(Exception):
    """Base class for all package errors."""


class ConfigError(TransmodeError):
    pass


class SchemaError(TransmodeError):
    pass


class SizeError(TransmodeError):
    pass


class DegenerateLabels(TransmodeError):
    pass


class UnknownCode(TransmodeError, KeyError):
    def __str__(self):  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class EncodingError(TransmodeError):
    def __init__(self, slot, message=None):
        self.slot = slot
        super().__init__(message or f"missing value for narrative slot {slot!r}")


class ParseError(TransmodeError):
    def __init__(self, raw, reason):
        self.raw = raw
        self.reason = reason
        super().__init__(f"{reason}: {raw[-200:]!r}")


class CredentialError(TransmodeError):
    pass


class TransportError(TransmodeError):
    pass


class BackendTimeout(TransportError, TimeoutError):
    pass


class CacheMiss(TransmodeError):
    pass


class EmptyEvaluation(TransmodeError):
    pass
