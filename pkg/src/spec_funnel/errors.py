"""Exception types shared across the package."""


class SpecFunnelError(Exception):
    """Base class for all package errors."""


class ValidationError(SpecFunnelError, ValueError):
    """An input violates a documented precondition."""


class EmptyAnswerError(ValidationError):
    """An answer with zero generated tokens was scored."""


class ConfigError(SpecFunnelError):
    """Malformed or inconsistent run configuration.

    Carries the dotted path of the offending field when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class BackendUnavailable(SpecFunnelError):
    """A model backend cannot serve a request (transport failure,
    malformed response, missing logprobs)."""


class DegenerateDistribution(SpecFunnelError):
    """A score distribution has too few points or zero spread."""


class InfiniteSpeedup(SpecFunnelError):
    """The analytic speedup diverges because every query is bypassed."""
