"""Exception types shared across the pipeline stages."""


class CiteMineError(Exception):
    """Base class for all toolkit errors."""


class NetworkError(CiteMineError):
    """Transport failed and retries are exhausted."""


class RateLimited(CiteMineError):
    """The API kept answering 429 until backoff was exhausted."""


class ParseError(CiteMineError):
    """Payload is not parseable as the expected XML structure."""


class NotFound(CiteMineError):
    """The API does not know the requested PMID."""


class AbstractMissing(CiteMineError):
    """Record exists but carries no abstract text.

    Distinct from NotFound: the neighborhood builder drops these
    silently instead of treating them as failures.
    """


class SchemaError(CiteMineError):
    """A JSONL line does not match the expected record schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ZeroVector(CiteMineError):
    """Cannot normalize an all-zero vector."""


class DimensionMismatch(CiteMineError):
    """Vectors of different dimensionality were mixed."""


class EmptyPool(CiteMineError):
    """An operation requiring candidates got an empty pool."""


class NoJudgedQueries(CiteMineError):
    """No query has a positive relevance judgment."""


class ProviderError(CiteMineError):
    """An embedding or query provider failed for a specific record."""

    def __init__(self, message: str, pmid: int | None = None):
        self.pmid = pmid
        if pmid is not None:
            message = f"pmid {pmid}: {message}"
        super().__init__(message)


class ConfigError(CiteMineError):
    """Invalid or unknown configuration key/value."""
