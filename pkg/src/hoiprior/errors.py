"""Exception types shared across the pipeline."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class SchemaError(ValueError):
    """A JSON document does not match its declared schema."""


class MissingEmbeddingError(KeyError):
    """An embedding table has no entry for a requested category."""


class InfeasibleMatchingError(ValueError):
    """More ground truths than queries: no injective assignment exists."""
