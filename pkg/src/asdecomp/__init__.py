"""Adaptive spectral decompositions of piecewise-constant media on P1 meshes."""

from .eigen import ConvergenceError, EigenResult, dense_generalized_eig, smallest_eigenpairs
from .fem import (
    DirichletReduction,
    SpdFactor,
    WeightSpec,
    assemble_mass,
    assemble_stiffness,
    reduce_dirichlet,
    solve_lifting,
    weight_on_element,
)
from .inversion import (
    ConvolutionOperator,
    InversionReport,
    add_noise,
    asi_solve,
    build_convolution,
    direct_solve,
    tsvd_solve,
)
from .media import (
    FeFunction,
    Medium,
    RasterMedium,
    evaluate_medium,
    interpolate_to_mesh,
    medium_from_raster,
    preset,
)
from .mesh import Mesh, build_uniform_mesh, element_geometry, mesh_for_h
from .quadrature import TriangleRule, integrate_on_element, l2_error_exact_vs_fe, rule_deg8_19pt
from .spectral import (
    DegenerateBasisError,
    SpectralBasis,
    build_as_basis,
    l2_error_fe,
    l2_norm_fe,
    project_PiK,
    project_QK,
)

__version__ = "0.1.0"

__all__ = [
    "add_noise",
    "asi_solve",
    "assemble_mass",
    "assemble_stiffness",
    "build_as_basis",
    "build_convolution",
    "build_uniform_mesh",
    "mesh_for_h",
    "ConvergenceError",
    "ConvolutionOperator",
    "DegenerateBasisError",
    "dense_generalized_eig",
    "direct_solve",
    "DirichletReduction",
    "EigenResult",
    "element_geometry",
    "evaluate_medium",
    "FeFunction",
    "integrate_on_element",
    "interpolate_to_mesh",
    "InversionReport",
    "l2_error_exact_vs_fe",
    "l2_error_fe",
    "l2_norm_fe",
    "Medium",
    "medium_from_raster",
    "Mesh",
    "preset",
    "project_PiK",
    "project_QK",
    "RasterMedium",
    "reduce_dirichlet",
    "rule_deg8_19pt",
    "smallest_eigenpairs",
    "solve_lifting",
    "SpdFactor",
    "SpectralBasis",
    "TriangleRule",
    "tsvd_solve",
    "weight_on_element",
    "WeightSpec",
]
