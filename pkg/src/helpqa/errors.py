"""Exception types shared across the package."""

from __future__ import annotations


class HelpQAError(Exception):
    """Base class for all package errors."""


class EmptyPage(HelpQAError):
    """A page yielded no extractable text."""


class ManifestMismatch(HelpQAError):
    """Corpus manifest and page files disagree (file without URL or vice versa)."""


class SchemaError(HelpQAError):
    """A serialized record violates its schema. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ConfigError(HelpQAError):
    """An experiment configuration is invalid; raised before any run starts."""


class GatewayError(HelpQAError):
    """Base class for model-gateway failures."""


class TransportError(GatewayError):
    """Network-level failure talking to the model endpoint."""


class RateLimited(TransportError):
    """Endpoint asked us to slow down; retry_after is the server hint in seconds."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ModelRefusal(GatewayError):
    """The model returned empty or filtered output; callers may apply fallbacks."""


class UnscriptedPrompt(GatewayError):
    """Mock backend received a prompt no script pattern matches."""


class EnhancementFailure(HelpQAError):
    """Query enhancement produced unusable output; caller falls back to the original query."""


class PositionOutOfRange(HelpQAError):
    """Requested gold-context position is outside the valid range."""


class JudgeParseFailure(HelpQAError):
    """Judge output had no parseable rating after the retry."""


class UnscoredRecord(HelpQAError):
    """Aggregation was asked to include a record that has not been scored."""
