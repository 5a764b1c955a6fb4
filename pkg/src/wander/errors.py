"""Exception taxonomy shared across the engine.

The split matters for callers: structural errors are caller bugs
(mismatched dimensions, malformed records), domain errors are
mathematically invalid requests (zero vectors, empty pools), config
errors abort before any provider call, provider errors are external
failures, store errors mean a run directory cannot be trusted.
CLI exit codes map onto this taxonomy.
"""


class WanderError(Exception):
    """Base class for all engine errors."""


class StructuralError(WanderError):
    """Caller passed structurally invalid data (e.g. dimension mismatch)."""


class DomainError(WanderError):
    """Operation is undefined for these inputs (e.g. zero-norm embedding)."""


class ConfigError(WanderError):
    """Run configuration is invalid; detected before provider calls."""


class NumericalError(WanderError):
    """A numerical routine produced results outside tolerated drift."""


class ProviderError(WanderError):
    """A provider call failed.

    ``retryable`` distinguishes transient transport trouble (timeouts,
    429/5xx) from permanent failures (schema violations, 4xx).
    """

    def __init__(self, message: str, *, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class ProtocolError(ProviderError):
    """Provider response violated the wire schema. Never retryable."""

    def __init__(self, message: str):
        super().__init__(message, retryable=False)


class StoreError(WanderError):
    """Run directory is missing, locked, or corrupt beyond recovery."""
