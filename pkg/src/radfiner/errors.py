"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: bad flags exit 1 (argparse level),
DataError and subclasses exit 2, NumericsError exits 3.
"""


class DataError(Exception):
    """Invalid input data: unparseable files or violated invariants."""


class DataFormatError(DataError):
    """A file does not conform to its declared line format."""


class ValidationError(DataError):
    """Structurally parseable data that breaks a documented invariant."""


class ConfigError(DataError):
    """A configuration value is out of range or inconsistent."""


class NumericsError(Exception):
    """Non-finite values or divergence in numerical code."""
