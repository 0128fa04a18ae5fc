"""Exception hierarchy shared by the modules; the CLI maps it to exit codes."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class ResourceLimitError(RuntimeError):
    """Request exceeds a configured resource cap."""
