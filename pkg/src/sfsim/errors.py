"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """An argument is outside the operation's domain."""


class ResourceError(RuntimeError):
    """A run would exceed a configured resource cap (trajectory budget, oracle size)."""

    def __init__(self, message: str, required: int | None = None, limit: int | None = None):
        super().__init__(message)
        self.required = required
        self.limit = limit


class IntegrityError(RuntimeError):
    """A contribution set is incomplete or inconsistent."""
