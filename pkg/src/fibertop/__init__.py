"""Topology and fiber-orientation optimization of 2D orthotropic structures.

Minimizes compliance of a plane-stress Q4 model over per-element density
and fiber angle, subject to a volume bound and clustered P-norm stress
constraints in the two principal material directions, using the method of
moving asymptotes with adjoint sensitivities.
"""

from .compliance import ObjectiveResult, compliance_and_gradients
from .fem import (BoundaryConditions, DesignState, SolvedState, StressField,
                  StructuredMesh, adjoint_solve, assemble_stiffness,
                  element_stiffness, element_stresses, solve_equilibrium,
                  strain_displacement)
from .filtering import FilterKernel, build_kernel, filter_density_sensitivities
from .gradcheck import GradReport, run_gradcheck
from .material import (OrthotropicMaterial, constitutive_matrix,
                       transform_derivatives, transform_matrices,
                       transformed_constitutive)
from .mma import MmaState, mma_subproblem
from .optimize import OptimizationResult, run_optimization
from .problems import (ProblemConfig, build_case_study, build_model,
                       load_config, save_config)
from .stress import (ClusterSet, ConstraintBlock, build_clusters,
                     constraint_values_and_sensitivities, pnorm, smooth_abs)
from .export import export_fields

__version__ = "0.1.0"

__all__ = [
    "BoundaryConditions",
    "ClusterSet",
    "ConstraintBlock",
    "DesignState",
    "FilterKernel",
    "GradReport",
    "MmaState",
    "ObjectiveResult",
    "OptimizationResult",
    "OrthotropicMaterial",
    "ProblemConfig",
    "SolvedState",
    "StressField",
    "StructuredMesh",
    "adjoint_solve",
    "assemble_stiffness",
    "build_case_study",
    "build_clusters",
    "build_kernel",
    "build_model",
    "compliance_and_gradients",
    "constitutive_matrix",
    "constraint_values_and_sensitivities",
    "element_stiffness",
    "element_stresses",
    "export_fields",
    "filter_density_sensitivities",
    "load_config",
    "mma_subproblem",
    "pnorm",
    "run_gradcheck",
    "run_optimization",
    "save_config",
    "smooth_abs",
    "solve_equilibrium",
    "strain_displacement",
    "transform_derivatives",
    "transform_matrices",
    "transformed_constitutive",
]
