"""Exception types shared across the package.

The CLI maps these onto exit codes: DataFormatError -> 2,
DivergenceError -> 3, anything argparse rejects -> 1.
"""


class DataFormatError(Exception):
    """A file failed structural validation (magic, version, checksum, schema)."""


class DivergenceError(Exception):
    """Training or an update step produced non-finite numbers."""
