import numpy as np
import pytest

from oracles import dual_volumes, load_by_quadrature
from rps.assembly import (fv_divergence, load_vector, lumped_mass, mass, p1_gradients,
                          stiffness)
from rps.coeff import CoeffSpec, sample
from rps.errors import StructuralError
from rps.mesh import build_structured, dual_cells, refine


def mesh1d(n):
    return build_structured(1, n)


def test_stiffness_1d_rows():
    m = mesh1d(10)
    h = 0.1
    K = stiffness(m, None, dirichlet=False).toarray()
    order = np.argsort(m.vertices[:, 0])
    K = K[np.ix_(order, order)]
    for r in range(1, 10):
        assert np.allclose(K[r, r - 1:r + 2], [-1 / h, 2 / h, -1 / h])


def test_stiffness_spd_and_linear_in_a():
    m = refine(build_structured(2, 4), 1)
    a = sample(CoeffSpec.trig_multiscale_2d(), m)
    K = stiffness(m, a).toarray()
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0
    K1 = stiffness(m, None)
    K2 = stiffness(m, np.full(m.n_cells, 2.0))
    assert np.allclose(K2.toarray(), 2 * K1.toarray())


def test_mass_rows_and_lumping():
    m = mesh1d(10)
    h = 0.1
    M = mass(m).toarray()
    order = np.argsort(m.vertices[:, 0])
    M = M[np.ix_(order, order)]
    assert np.allclose(M[5, 4:7], [h / 6, 2 * h / 3, h / 6])
    m2 = refine(build_structured(2, 3), 1)
    M2 = mass(m2)
    assert np.isclose(M2.sum(), 1.0)
    assert np.allclose(lumped_mass(m2).diagonal(), np.asarray(M2.sum(axis=1)).ravel())


def fv(m, a=None):
    a = np.ones(m.n_cells) if a is None else a
    return fv_divergence(m, a, dual_cells(m))


def test_fv_kills_linear_functions():
    m = refine(build_structured(2, 4), 1)
    u = 0.3 + 2 * m.vertices[:, 0] - m.vertices[:, 1]
    g = fv(m, np.full(m.n_cells, 3.0)).apply(u)
    assert np.allclose(g[m.interior_nodes], 0, atol=1e-10)


def test_fv_1d_second_difference():
    m = mesh1d(8)
    h = 1 / 8
    x = m.vertices[:, 0]
    u = np.sin(3 * x)
    g = fv(m).apply(u)
    for i in m.interior_nodes:
        left = np.argmin(np.abs(x - (x[i] - h)))
        right = np.argmin(np.abs(x - (x[i] + h)))
        assert np.isclose(g[i], -(u[left] - 2 * u[i] + u[right]) / h**2)


def test_fv_quadratic():
    m = refine(build_structured(1, 4), 2)
    x = m.vertices[:, 0]
    g = fv(m).apply(x * (1 - x))
    assert np.allclose(g[m.interior_nodes], 2.0)


def test_fv_equals_stiffness_over_volume():
    m = refine(build_structured(2, 4), 2)
    a = sample(CoeffSpec.trig_multiscale_2d(), m)
    B = fv(m, a).B.toarray()
    K = stiffness(m, a, dirichlet=False).toarray()
    w = dual_volumes(m)
    I = m.interior_nodes
    assert np.allclose(B[I], K[I] / w[I][:, None], rtol=1e-12, atol=1e-8)


def boundary_flux(m, a, u):
    """Outward flux of a grad u across the square's boundary, edge by edge."""
    grads = p1_gradients(m)
    total = 0.0
    for t, cell in enumerate(m.cells):
        gu = grads[t].T @ u[cell]
        X = m.vertices[cell]
        for p, q in ((0, 1), (1, 2), (2, 0)):
            for axis in (0, 1):
                for side in (0.0, 1.0):
                    if X[p, axis] == side and X[q, axis] == side:
                        n = np.zeros(2)
                        n[axis] = 1.0 if side == 1.0 else -1.0
                        total += a[t] * gu @ n * np.linalg.norm(X[p] - X[q])
    return total


def test_flux_balance():
    m = refine(build_structured(2, 3), 1)
    a = sample(CoeffSpec.trig_multiscale_2d(), m).values
    u = np.random.default_rng(0).standard_normal(m.n_vertices)
    op = fv(m, a)
    total = np.sum(op.w * op.apply(u))
    assert np.isclose(total, -boundary_flux(m, a, u), rtol=1e-10, atol=1e-10)


def test_vnorm_nonnegative():
    m = refine(build_structured(2, 3), 1)
    op = fv(m)
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert op.vnorm_sq(rng.standard_normal(m.n_vertices)) > 0
    assert op.vnorm_sq(np.zeros(m.n_vertices)) == 0


def test_consistency_second_order():
    errs = []
    for n in (8, 16, 32):
        m = build_structured(2, n)
        u = np.prod(np.sin(np.pi * m.vertices), axis=1)
        g = fv(m).apply(u)
        I = m.interior_nodes
        errs.append(np.max(np.abs(g[I] - 2 * np.pi**2 * u[I])))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.8)


def test_fv_structural_checks():
    m = build_structured(2, 3)
    other = build_structured(2, 3)
    with pytest.raises(StructuralError):
        fv_divergence(m, np.ones(m.n_cells), dual_cells(other))
    with pytest.raises(StructuralError):
        fv_divergence(m, np.ones(3), dual_cells(m))


def test_load_vector():
    m = refine(build_structured(2, 4), 2)
    assert not np.any(load_vector(m, 0.0))
    assert np.isclose(load_vector(m, 1.0).sum(), 1.0)

    def g(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    errs = []
    for k in (1, 2):
        mk = refine(build_structured(2, 4), k)
        b = load_vector(mk, g)
        ref = load_by_quadrature(mk, g)
        errs.append(np.max(np.abs(b - ref)) / np.max(np.abs(ref)))
    assert errs[0] < 0.05
    assert errs[0] / errs[1] > 3
