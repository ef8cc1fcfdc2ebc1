"""Exception types shared across the engine."""


class MemrouteError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(MemrouteError):
    """A pipeline or command is missing a required index, provider, or file."""


class DataFormatError(MemrouteError):
    """An input file violates its documented schema."""


class DuplicateDocumentError(MemrouteError):
    """A document id was added to an index it is already in."""


class MissingEmbeddingError(MemrouteError):
    """The file-backed embedding provider has no vector for a requested digest."""


class StoreCorruptionError(MemrouteError):
    """A persisted store fails version or checksum validation."""


class EvaluationError(MemrouteError):
    """A benchmark run cannot be scored (missing stores or results)."""
