"""Exception types raised across the package."""


class ScenarioError(ValueError):
    """Invalid field or scenario description."""


class SchemaError(ScenarioError):
    """Configuration file does not match the strict schema."""


class VacuumRegionError(ArithmeticError):
    """Energy density fell below the vacuum floor where a velocity was needed."""


class QuadratureError(ArithmeticError):
    """A quadrature did not converge, or its tail bound exceeds tolerance."""


class InadmissibleVariationError(ValueError):
    """A variation does not respect the boundary conditions it is paired with."""


class NonSpacelikeError(ValueError):
    """A hypersurface tilts by 1/c or more somewhere."""
