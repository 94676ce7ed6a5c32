"""Exception hierarchy shared across the package."""


class DistokError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DistokError):
    """A configuration value violates its constraints.

    ``path`` is a JSON-pointer-style string locating the offending field,
    e.g. "/world/num_known_concepts".
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DegenerateInputError(DistokError):
    """An input collapsed to something the operation cannot handle
    (zero vector before normalization, zero-norm cosine argument, ...)."""


class NonFiniteError(DistokError):
    """A NaN or infinity showed up where only finite values are allowed."""


class PoolError(DistokError):
    """Concept-pool contract violation (too few entries, no novel entries)."""


class SchemaError(DistokError):
    """A serialized artifact failed to load (bad version, malformed document,
    invariant violation)."""
