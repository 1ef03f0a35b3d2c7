"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 2 (argparse),
data/content problems exit 3, everything else is a crash.
"""


class VrfError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(VrfError):
    """A snapshot file or schema config is structurally unusable."""


class IntegrityError(VrfError):
    """Input data violates a hard invariant (e.g. duplicate voter ids)."""


class DataError(VrfError):
    """Valid-looking input is inconsistent with what an operation needs."""


class FileParseError(VrfError):
    """A serialized artifact (CSV/JSON) could not be parsed."""


class ConfigError(VrfError):
    """A scenario or run configuration is infeasible."""


class ModelError(VrfError):
    """Classifier training, loading, or prediction failed."""
