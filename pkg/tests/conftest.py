import numpy as np
import pytest

from plateflow import mesh as pm


def cylinder_map(alpha):
    """Closed-form isometric cylinder of radius 1/alpha rolled along x1.

    y = (sin(a x1)/a, x2, (1 - cos(a x1))/a); the gradient columns are
    orthonormal for every x, |D^2 y|^2 = alpha^2, and Delta y . normal = alpha.
    """
    a = float(alpha)

    def y(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        return np.column_stack([np.sin(a * x[:, 0]) / a, x[:, 1],
                                (1.0 - np.cos(a * x[:, 0])) / a])

    def grad(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        g = np.zeros((len(x), 3, 2))
        g[:, 0, 0] = np.cos(a * x[:, 0])
        g[:, 1, 1] = 1.0
        g[:, 2, 0] = np.sin(a * x[:, 0])
        return g

    def hess(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        H = np.zeros((len(x), 3, 2, 2))
        H[:, 0, 0, 0] = -a * np.sin(a * x[:, 0])
        H[:, 2, 0, 0] = a * np.cos(a * x[:, 0])
        return H

    return y, grad, hess


def random_quadratic(rng):
    """A random global quadratic and its exact gradient."""
    c0 = rng.standard_normal()
    c1 = rng.standard_normal(2)
    C = rng.standard_normal((2, 2))
    C = 0.5 * (C + C.T)

    def w(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        return c0 + x @ c1 + np.einsum("ni,ij,nj->n", x, C, x)

    def grad(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        return c1[None, :] + 2.0 * x @ C

    return w, grad


def random_field(mesh, rng, scale=1.0, clamp=False):
    """Random Kirchhoff-triangle field; optionally zero on clamped vertices."""
    from plateflow.dkt import DeformationField
    dofs = scale * rng.standard_normal(9 * mesh.num_vertices)
    if clamp:
        for v in mesh.dirichlet_vertices:
            dofs[9 * v:9 * v + 9] = 0.0
    return DeformationField(dofs)


@pytest.fixture(scope="session")
def rect_l2():
    return pm.generate_rectangle_mesh(2, "nonsymmetric")


@pytest.fixture(scope="session")
def rect_l2_clamped():
    m = pm.generate_rectangle_mesh(2, "nonsymmetric")
    return pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, 2.0))])


@pytest.fixture(scope="session")
def oshape_l1_clamped():
    m = pm.generate_oshape_mesh(1, "symmetric")
    return pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, -1.0)),
                                         ((-5.0, -2.0), (-4.0, -2.0))])
