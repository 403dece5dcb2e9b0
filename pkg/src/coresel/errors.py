"""Exception types shared across the toolkit."""


class DataError(ValueError):
    """Invalid data: bad file contents, broken invariants, infeasible parameters.

    The CLI maps this to exit code 2. Messages always name the offending
    file, flag, index, or value.
    """


class UsageError(Exception):
    """Bad command-line usage. The CLI maps this to exit code 1."""
