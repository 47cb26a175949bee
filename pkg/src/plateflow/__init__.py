"""Bilayer plate bending by constrained discrete gradient flows.

Large isometric bending deformations of bilayer plates: the reduced bending
energy is discretized with Kirchhoff triangles carrying nodal values and
gradients, minimized by a semi-implicit gradient flow with a nodal
linearization of the isometry constraint, and obstacles enter through a
convex-concave penalty.
"""

from .constraints import (apply_dirichlet, identity_boundary_data,
                          isometry_defect, tangent_constraint_matrix)
from .dkt import (DeformationField, DktDofMap, flat_embedding, interpolate_dkt)
from .energy import (SimulationParams, assemble_bending_stiffness,
                     penalty_energy, penalty_pieces, total_energy)
from .flow import GradientFlow, RunReport, run_flow, step_size_safeguard
from .mesh import (TriangleMesh, build_edge_data, generate_oshape_mesh,
                   generate_rectangle_mesh, load_mesh, save_mesh,
                   tag_dirichlet_boundary)
from .presets import PRESETS, RunConfig, resolve

__version__ = "0.1.0"

__all__ = [
    "DeformationField", "DktDofMap", "GradientFlow", "PRESETS", "RunConfig",
    "RunReport", "SimulationParams", "TriangleMesh", "apply_dirichlet",
    "assemble_bending_stiffness", "build_edge_data", "flat_embedding",
    "generate_oshape_mesh", "generate_rectangle_mesh", "identity_boundary_data",
    "interpolate_dkt", "isometry_defect", "load_mesh", "penalty_energy",
    "penalty_pieces", "resolve", "run_flow", "save_mesh",
    "step_size_safeguard", "tag_dirichlet_boundary", "tangent_constraint_matrix",
    "total_energy",
]
