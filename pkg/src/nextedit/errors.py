"""Exception taxonomy shared by all modules."""


class ConfigError(ValueError):
    """A configuration value or shape contract is violated."""


class InputError(ValueError):
    """A caller-supplied input is malformed (sizes, vocab, ranges)."""


class LayoutError(ValueError):
    """A sequence layout request is inconsistent (orders, teacher shapes)."""


class CorruptionError(RuntimeError):
    """A serialized artifact failed validation while loading."""


class UndefinedSimilarityError(ValueError):
    """A similarity was requested on degenerate (zero) feature vectors."""


class TrainingDiverged(RuntimeError):
    """A training step produced a non-finite loss."""
