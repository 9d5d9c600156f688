class InputError(ValueError):
    """Bad user input: malformed files, out-of-range ids, violated preconditions."""


class InvariantError(RuntimeError):
    """An internal numerical invariant did not hold (e.g. a row stopped summing to 1)."""
