"""Exception types shared across the package."""


class IgafemError(Exception):
    """Base class for all package errors."""


class DomainError(IgafemError):
    """Parametric coordinate outside the knot-vector domain."""


class PatchError(IgafemError):
    """Invalid spline patch definition (weights, knot vector, control net)."""


class RefinementError(IgafemError):
    """Invalid knot insertion request."""


class MeshError(IgafemError):
    """Invalid finite-element mesh (connectivity, degenerate Jacobian, sets)."""


class ConformityError(MeshError):
    """Local/global interface nodes do not match."""


class MeshParseError(MeshError):
    """Malformed mesh or operator text file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MaterialError(IgafemError):
    """Out-of-range material parameters."""


class ConfigError(IgafemError):
    """Invalid problem configuration."""


class NonConvergenceError(IgafemError):
    """Iterative solver failed to reach the requested tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
