"""Discrete bending energy, its assembled derivatives, and the obstacle penalty.

The energy of a deformation y is

    E[y] = 1/2 ||grad theta(y)||^2  -  alpha * L{ lap_h(y) . (d1 y x d2 y) }
           -  L{ f . y },

where theta is the reconstructed quadratic gradient, lap_h the element-local
discrete Laplacian, and L the vertex-lumped integral.  In obstacle mode the
penalty (1/2 eps) L{ (y3 - g)_+^2 } is added; its integrand splits into a
convex part s^2 and a concave part treated explicitly in the flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .dkt import (DeformationField, DktDofMap, ElementOperators, element_operators,
                  local_scalar_dofs, lumped_p1_integral, vertex_lumped_masses)
from .mesh import TriangleMesh

MODES = ("isometry_flow", "penalized_flow")

ForceLike = Union[None, np.ndarray, tuple, list, Callable]


@dataclass
class SimulationParams:
    """Scalar run parameters of the gradient flows.

    alpha      spontaneous-curvature mismatch (1/length)
    tau        pseudo-time step
    eps_stop   termination threshold on the update norm ||grad theta(d_t y)||
    eps_penalty  obstacle penalty parameter (penalized mode only)
    f          body force: None, a constant 3-vector, or a callable of the
               reference coordinates returning (N, 3)
    obstacle_height  height of the flat obstacle plane (1.0 in the benchmarks)
    """

    alpha: float = 0.0
    tau: float = 0.1
    eps_stop: float = 1.0e-3
    eps_penalty: Optional[float] = None
    f: ForceLike = None
    obstacle_height: float = 1.0
    mode: str = "isometry_flow"
    max_iters: int = 500_000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (self.tau > 0):
            raise ValueError("tau must be positive")
        if not (self.eps_stop > 0):
            raise ValueError("eps_stop must be positive")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.mode == "penalized_flow":
            if self.eps_penalty is None or not (self.eps_penalty > 0):
                raise ValueError("penalized mode requires eps_penalty > 0")

    @property
    def penalized(self) -> bool:
        return self.mode == "penalized_flow"


def force_vertex_values(mesh: TriangleMesh, f: ForceLike) -> np.ndarray:
    """Body force evaluated at the vertices, shape (V, 3)."""
    if f is None:
        return np.zeros((mesh.num_vertices, 3))
    if callable(f):
        return np.asarray(f(mesh.vertices), dtype=np.float64).reshape(-1, 3)
    return np.broadcast_to(np.asarray(f, dtype=np.float64), (mesh.num_vertices, 3)).copy()


def assemble_bending_stiffness(mesh: TriangleMesh, dofmap: DktDofMap | None = None,
                               ops: ElementOperators | None = None) -> sp.csr_matrix:
    """Global symmetric matrix K with 1/2 y^T K y = 1/2 ||grad theta(y)||^2."""
    if ops is None:
        ops = element_operators(mesh)
    if dofmap is None:
        dofmap = DktDofMap.from_mesh(mesh)
    idx = ops.scalar_dof_indices  # (F, 3c, 9)
    rows = np.repeat(idx, 9, axis=2).reshape(-1)
    cols = np.tile(idx, (1, 1, 9)).reshape(-1)
    data = np.tile(ops.bending[:, None, :, :], (1, 3, 1, 1)).reshape(-1)
    K = sp.coo_matrix((data, (rows, cols)), shape=(dofmap.num_dofs, dofmap.num_dofs))
    return K.tocsr()


def nodal_normals(field: DeformationField) -> np.ndarray:
    """d1 y x d2 y at each vertex, shape (V, 3)."""
    g = field.gradients()
    return np.cross(g[:, :, 0], g[:, :, 1])


def nonlinear_energy_term(mesh: TriangleMesh, field: DeformationField, alpha: float,
                          ops: ElementOperators | None = None) -> float:
    """alpha * L{ lap_h(y) . (d1 y x d2 y) }; enters the energy with a minus sign."""
    if ops is None:
        ops = element_operators(mesh)
    loc = local_scalar_dofs(mesh, field)
    lap = np.einsum("fpl,fcl->fpc", ops.divergence, loc)       # (F, 3v, 3c)
    nu = nodal_normals(field)[mesh.triangles]                  # (F, 3v, 3c)
    return alpha * lumped_p1_integral(mesh, np.einsum("fpc,fpc->fp", lap, nu))


def nonlinear_rhs(mesh: TriangleMesh, field: DeformationField, alpha: float,
                  ops: ElementOperators | None = None) -> np.ndarray:
    """Assembled linear functional r with r . w equal to the Gateaux derivative
    of nonlinear_energy_term at `field`; the sum of the three lumped terms in
    which the test function enters the Laplacian, d1, and d2 slots in turn."""
    if ops is None:
        ops = element_operators(mesh)
    tri = mesh.triangles
    w = ops.areas / 3.0
    g = field.gradients()
    a1 = g[:, :, 0][tri]                                       # (F, 3v, 3c)
    a2 = g[:, :, 1][tri]
    nu = np.cross(a1, a2)
    loc = local_scalar_dofs(mesh, field)
    lap = np.einsum("fpl,fcl->fpc", ops.divergence, loc)

    r = np.zeros(9 * mesh.num_vertices)
    # term 1: test function inside the discrete Laplacian
    contrib = alpha * np.einsum("f,fpc,fpl->fcl", w, nu, ops.divergence)
    np.add.at(r, ops.scalar_dof_indices.reshape(-1), contrib.reshape(-1))
    # terms 2 and 3: test function inside the cross product; contributions land
    # on the nodal gradient dofs.  l.(d1w x a2) = d1w.(a2 x l),
    # l.(a1 x d2w) = d2w.(l x a1)
    c1 = alpha * w[:, None, None] * np.cross(a2, lap)          # -> (vertex, c, kind=1)
    c2 = alpha * w[:, None, None] * np.cross(lap, a1)          # -> (vertex, c, kind=2)
    base = (9 * tri[:, :, None] + 3 * np.arange(3)[None, None, :])
    np.add.at(r, (base + 1).reshape(-1), c1.reshape(-1))
    np.add.at(r, (base + 2).reshape(-1), c2.reshape(-1))
    return r


def force_rhs(mesh: TriangleMesh, f: ForceLike) -> np.ndarray:
    """Vertex-lumped load vector: entry (z, c, value) = f_c(z) * m_z."""
    fv = force_vertex_values(mesh, f)
    m = vertex_lumped_masses(mesh)
    r = np.zeros((mesh.num_vertices, 3, 3))
    r[:, :, 0] = m[:, None] * fv
    return r.reshape(-1)


def total_energy(mesh: TriangleMesh, field: DeformationField, params: SimulationParams,
                 K: sp.spmatrix | None = None, ops: ElementOperators | None = None) -> float:
    """The discrete energy E[y] (excluding any obstacle penalty).

    Note: the constant alpha^2 |omega| of the continuous functional is not
    included, so flat states have energy zero and bent equilibria can be
    negative.
    """
    if K is not None:
        bend = 0.5 * float(field.dofs @ (K @ field.dofs))
    else:
        if ops is None:
            ops = element_operators(mesh)
        loc = local_scalar_dofs(mesh, field)
        bend = 0.5 * float(np.einsum("fcl,flm,fcm->", loc, ops.bending, loc))
    e = bend - nonlinear_energy_term(mesh, field, params.alpha, ops=ops)
    if params.f is not None:
        e -= float(force_rhs(mesh, params.f) @ field.dofs)
    return e


# ---------------------------------------------------------------------------
# obstacle penalty

def penalty_pieces(s, height: float = 1.0):
    """Concave part P of the splitting (s-g)_+^2 = s^2 + P(s) and p = P'.

    For the unit obstacle: P(s) = -2s+1 for s > 1 and -s^2 for s <= 1;
    p(s) = -2 for s > 1 and -2s for s <= 1 (continuous, nonincreasing).
    """
    s = np.asarray(s, dtype=np.float64)
    above = s > height
    P = np.where(above, -2.0 * height * s + height**2, -s * s)
    p = np.where(above, -2.0 * height, -2.0 * s)
    if P.ndim == 0:
        return float(P), float(p)
    return P, p


def penalty_energy(mesh: TriangleMesh, field: DeformationField, eps: float,
                   height: float = 1.0) -> float:
    """(1/2 eps) * lumped integral of (y3 - height)_+^2; zero iff no vertex
    exceeds the obstacle."""
    if not eps > 0:
        raise ValueError("penalty parameter eps must be positive")
    y3 = field.positions()[:, 2]
    over = np.maximum(y3 - height, 0.0)
    m = vertex_lumped_masses(mesh)
    return float((m * over**2).sum()) / (2.0 * eps)


def obstacle_penetration(mesh: TriangleMesh, field: DeformationField,
                         height: float = 1.0) -> float:
    """Discrete max norm of (y3 - height)_+ over the vertices."""
    y3 = field.positions()[:, 2]
    return float(np.maximum(y3 - height, 0.0).max())


def third_component_lumped_mass(mesh: TriangleMesh) -> sp.csr_matrix:
    """Diagonal lumped mass acting on the third-component value dofs."""
    m = vertex_lumped_masses(mesh)
    diag = np.zeros(9 * mesh.num_vertices)
    diag[6::9] = m  # dof (v, component 2, value)
    return sp.diags(diag).tocsr()


def penalty_rhs(mesh: TriangleMesh, field: DeformationField, eps: float,
                height: float = 1.0, masses: np.ndarray | None = None) -> np.ndarray:
    """Explicit penalty terms of the penalized flow at the previous iterate:
    -(1/eps) M y3 - (1/2 eps) M p(y3).  Cancels exactly where y3 <= height."""
    if masses is None:
        masses = vertex_lumped_masses(mesh)
    y3 = field.positions()[:, 2]
    _, p = penalty_pieces(y3, height)
    r = np.zeros((mesh.num_vertices, 3, 3))
    r[:, 2, 0] = -(masses / eps) * (y3 + 0.5 * p)
    return r.reshape(-1)
