"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """A scenario or solver configuration is inconsistent."""


class CFLError(RuntimeError):
    """A requested time step violates the stability bound of a scheme."""

    def __init__(self, dt, bound, scheme=""):
        self.dt = float(dt)
        self.bound = float(bound)
        self.scheme = scheme
        super().__init__(f"{scheme} time step {dt:.6g} violates CFL bound {bound:.6g}".strip())


class NumericError(RuntimeError):
    """A linear solve or update produced non-finite values."""


class GridMismatchError(ValueError):
    """Two fields that should share a grid or time axis do not."""

    def __init__(self, message, **details):
        self.details = details
        super().__init__(message)


def error_payload(exc):
    """Machine-readable description of an exception."""
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, CFLError):
        payload.update(dt=exc.dt, bound=exc.bound, scheme=exc.scheme)
    payload.update(getattr(exc, "details", {}))
    return payload
