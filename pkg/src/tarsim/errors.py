"""Exception types shared across the package."""


class TarSimError(Exception):
    """Base class for all tarsim errors."""


class CorpusFormatError(TarSimError):
    """A corpus or label file could not be parsed."""


class IntegrityError(TarSimError):
    """An operation would violate a structural invariant (e.g. relabeling)."""


class ConfigurationError(TarSimError):
    """A declarative configuration is invalid or incomplete."""


class DriftError(ConfigurationError):
    """A resume attempt does not match the checkpoint it resumes from."""


class LedgerLoadError(TarSimError):
    """A persisted ledger or score dump is corrupt or incompatible."""


class ReplayError(TarSimError):
    """Frozen-mode replay is missing data it needs (e.g. score dumps)."""


class NotTrainedError(TarSimError):
    """A ranker was asked to score before it was trained."""
