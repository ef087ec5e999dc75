"""Exception types shared across the package."""


class SlitSpiralError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class MeshError(SlitSpiralError, ValueError):
    """The input mesh violates a structural requirement."""

    exit_code = 2


class InfeasibleError(SlitSpiralError):
    """The geometry admits no valid result for the requested operation."""

    exit_code = 3


class SolverError(SlitSpiralError):
    """A numerical solve failed or did not converge."""

    exit_code = 1


class InputError(SlitSpiralError, ValueError):
    """A user-supplied file or parameter is unusable."""

    exit_code = 2
