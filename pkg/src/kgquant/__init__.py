"""Numerical lab for natural boundary conditions and seam quantization of Klein-Gordon fields."""

__version__ = "0.1.0"

from .errors import (
    InadmissibleVariationError,
    NonSpacelikeError,
    QuadratureError,
    ScenarioError,
    SchemaError,
    VacuumRegionError,
)
from .field import (
    NATURAL,
    CylindricalMode,
    FieldState,
    PhysicalConstants,
    RadialWindow,
    build_field,
    evaluate,
    kge_residual,
    preset,
)
from .hypersurface import NaturalSurfaceMesh, seam_uniformity, trace_loop, trace_surface
from .quantization import QuantizationReport, lz_chain_check, quantize_seam
from .stress_energy import local_group_velocity, stress_energy_at

__all__ = [
    "__version__",
    "InadmissibleVariationError",
    "NonSpacelikeError",
    "QuadratureError",
    "ScenarioError",
    "SchemaError",
    "VacuumRegionError",
    "NATURAL",
    "CylindricalMode",
    "FieldState",
    "PhysicalConstants",
    "RadialWindow",
    "build_field",
    "evaluate",
    "kge_residual",
    "preset",
    "NaturalSurfaceMesh",
    "seam_uniformity",
    "trace_loop",
    "trace_surface",
    "QuantizationReport",
    "lz_chain_check",
    "quantize_seam",
    "local_group_velocity",
    "stress_energy_at",
]
