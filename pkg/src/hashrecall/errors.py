"""Exception types shared across the package."""


class FormatError(Exception):
    """A file or byte stream does not conform to one of the on-disk formats."""


class InvariantError(Exception):
    """An internal consistency check failed; indicates a bug, not bad input."""
