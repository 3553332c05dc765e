"""Error hierarchy for the model runner."""


class RunnerError(Exception):
    """Base class for all runner failures."""


class ConfigError(RunnerError):
    """A configuration value is missing, malformed, or out of range."""


class ModelLoadError(RunnerError):
    """The requested model or its weights could not be resolved."""


class ManifestError(RunnerError):
    """The dataset manifest is unreadable or malformed."""


class MissingImageError(RunnerError):
    """A variant image required by the manifest does not exist."""


class MappingError(RunnerError):
    """The superclass mapping file is unreadable or malformed."""
