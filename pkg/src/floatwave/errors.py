"""Exception types raised by floatwave."""


class FloatwaveError(Exception):
    """Base class for all package errors."""


class InvalidGeometry(FloatwaveError):
    pass


class NotSurfacePiercing(InvalidGeometry):
    pass


class DegenerateImmersedPart(InvalidGeometry):
    pass


class Unstable(FloatwaveError):
    """Restoring matrix has a negative direction; the equilibrium is not stable."""


class ObliqueAngleTooLarge(FloatwaveError):
    """Axial wavenumber k is not below nu = omega**2 / g."""


class CutOff(FloatwaveError):
    """Finite depth with kappa0 <= k: no wave propagates across the cylinder."""


class MeshQuality(FloatwaveError):
    pass


class SingularSystem(FloatwaveError):
    def __init__(self, message, smallest_pivot=None):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class NearlySingularT(FloatwaveError):
    pass


class NotDeepEnough(FloatwaveError):
    pass


class ConfigError(FloatwaveError):
    pass


class NotInEquilibrium(ConfigError):
    """Body fails Archimedes' law, buoyancy alignment or the stability checks."""
