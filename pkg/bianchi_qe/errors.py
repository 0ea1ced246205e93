class BianchiError(Exception):
    """Base class for all library errors."""


class FieldError(BianchiError):
    pass


class IdealError(BianchiError):
    pass


class PoleError(BianchiError):
    pass


class PrecisionError(BianchiError):
    """Requested tolerance or convergence could not be reached."""


class EnvelopeError(BianchiError):
    pass


class MembershipError(BianchiError):
    pass


class SearchExhaustedError(BianchiError):
    pass


class ConfigError(BianchiError):
    pass
