"""Linearized isometry constraints, boundary data, and the isometry defect.

Updates of the gradient flow live in the tangent space of the nodal isometry
constraint: at every free vertex z the symmetric part of grad(w)^T grad(y)
must vanish.  That is three scalar rows per free vertex acting only on the
six nodal gradient dofs of that vertex, ordered (11, 22, 12-symmetric).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .dkt import DeformationField, DktDofMap
from .mesh import TriangleMesh


class ConstraintDegeneracyError(RuntimeError):
    """A per-vertex constraint block lost rank; the nodal gradients degenerated."""


@dataclass(frozen=True)
class ConstraintSystem:
    """Sparse constraint matrix over the full dof vector.

    matrix        (3 * #free vertices, 9 V) csr
    free_vertices row-block v of three rows belongs to free_vertices[v]
    """

    matrix: sp.csr_matrix
    free_vertices: np.ndarray

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]


class ConstraintBuilder:
    """Rebuilds the tangent-space matrix each step; the sparsity pattern is
    fixed by the dof map so only the data vector changes."""

    def __init__(self, dofmap: DktDofMap):
        self.dofmap = dofmap
        free = dofmap.free_vertices
        self.free_vertices = free
        n = len(free)
        # per vertex: row (11) hits kind-1 dofs, row (22) kind-2, row (12) both
        base = 9 * free[:, None] + 3 * np.arange(3)[None, :]  # (n, 3 comps)
        cols11 = base + 1
        cols22 = base + 2
        cols12 = np.stack([base + 1, base + 2], axis=2).reshape(n, 6)
        self._indices = np.concatenate([cols11, cols22, cols12], axis=1).reshape(-1)
        counts = np.tile([3, 3, 6], n)
        self._indptr = np.concatenate([[0], np.cumsum(counts)])
        self._shape = (3 * n, dofmap.num_dofs)

    def build(self, field: DeformationField) -> ConstraintSystem:
        g = field.gradients()[self.free_vertices]  # (n, 3, 2)
        a1 = g[:, :, 0]
        a2 = g[:, :, 1]
        data = np.concatenate(
            [a1, a2, np.stack([a2, a1], axis=2).reshape(-1, 6)], axis=1).reshape(-1)
        mat = sp.csr_matrix((data, self._indices, self._indptr), shape=self._shape)
        return ConstraintSystem(mat, self.free_vertices)

    def min_block_singular_value(self, field: DeformationField) -> float:
        """Smallest singular value over the per-vertex 3x6 constraint blocks."""
        if len(self.free_vertices) == 0:
            return np.inf
        g = field.gradients()[self.free_vertices]
        a1 = g[:, :, 0]
        a2 = g[:, :, 1]
        zero = np.zeros_like(a1)
        blocks = np.concatenate([
            np.concatenate([a1, zero], axis=1)[:, None, :],
            np.concatenate([zero, a2], axis=1)[:, None, :],
            np.concatenate([a2, a1], axis=1)[:, None, :],
        ], axis=1)  # (n, 3, 6)
        gram = blocks @ blocks.transpose(0, 2, 1)
        lam = np.linalg.eigvalsh(gram)
        return float(np.sqrt(max(lam[:, 0].min(), 0.0)))


def tangent_constraint_matrix(field: DeformationField, dofmap: DktDofMap) -> ConstraintSystem:
    """One-shot construction of the tangent-space constraint system at `field`."""
    return ConstraintBuilder(dofmap).build(field)


def isometry_defect(field: DeformationField) -> float:
    """Max over vertices of the Frobenius norm of grad(y)^T grad(y) - I."""
    g = field.gradients()
    gram = np.einsum("vci,vcj->vij", g, g)
    gram[:, 0, 0] -= 1.0
    gram[:, 1, 1] -= 1.0
    return float(np.sqrt((gram**2).sum(axis=(1, 2))).max())


def nodal_isometry_defects(field: DeformationField) -> np.ndarray:
    """Per-vertex Frobenius norm of the nodal isometry defect, shape (V,)."""
    g = field.gradients()
    gram = np.einsum("vci,vcj->vij", g, g)
    gram[:, 0, 0] -= 1.0
    gram[:, 1, 1] -= 1.0
    return np.sqrt((gram**2).sum(axis=(1, 2)))


def identity_boundary_data():
    """y_D = (x1, x2, 0), phi_D = [I2; 0]: the horizontal clamp of the benchmarks."""

    def y_d(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        return np.column_stack([x[:, 0], x[:, 1], np.zeros(len(x))])

    def phi_d(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        out = np.zeros((len(x), 3, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        return out

    return y_d, phi_d


def apply_dirichlet(field: DeformationField, mesh: TriangleMesh,
                    y_d: Callable, phi_d: Callable) -> DeformationField:
    """Overwrite the dofs of clamped vertices with the boundary data."""
    out = field.copy()
    verts = mesh.dirichlet_vertices
    if len(verts) == 0:
        return out
    pts = mesh.vertices[verts]
    vals = np.asarray(y_d(pts), dtype=np.float64).reshape(-1, 3)
    grads = np.asarray(phi_d(pts), dtype=np.float64).reshape(-1, 3, 2)
    nod = out.nodal()
    nod[verts, :, 0] = vals
    nod[verts, :, 1:] = grads
    return out
