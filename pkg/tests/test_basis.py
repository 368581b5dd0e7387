import numpy as np
import pytest

from oracles import kkt_basis, vnorm_matrix
from rps.analysis import prepare
from rps.basis import RpsSolver, gram, theta
from rps.coeff import CoeffSpec
from rps.errors import ConditioningError, DegenerateSupportError, SolverError
from rps.homog import coarse_solve


def kronecker_ok(solver, basis):
    Phi = basis.matrix().toarray()
    return np.array_equal(Phi[solver.coarse_vertices], np.eye(solver.n_coarse))


@pytest.mark.parametrize("layers", [None, 1, 2])
def test_kronecker_and_support_exact(small2d, layers):
    basis = small2d.solve_all(layers)
    assert kronecker_ok(small2d, basis)
    n = small2d.fine.n_vertices
    for f in basis.functions:
        phi = f.dense(n)
        allowed = np.zeros(n, bool)
        if f.support is None:
            allowed[small2d.fine.interior_nodes] = True
        else:
            allowed[f.support.fine_nodes] = True
        assert np.all(phi[~allowed] == 0.0)


def test_kkt_oracle_1d():
    coarse, fine, a = prepare(1, 5, 1, CoeffSpec.random_fourier_1d(seed=11))
    assert len(fine.interior_nodes) == 9
    solver = RpsSolver(coarse, fine, a)
    for i in range(solver.n_coarse):
        phi = solver.solve_basis(i).dense(fine.n_vertices)
        assert np.max(np.abs(phi - kkt_basis(coarse, fine, a, i))) < 1e-8


@pytest.mark.parametrize("layers", [None, 1])
def test_kkt_oracle_2d(layers):
    coarse, fine, a = prepare(2, 4, 1, CoeffSpec.trig_multiscale_2d())
    solver = RpsSolver(coarse, fine, a)
    for i in range(solver.n_coarse):
        phi = solver.solve_basis(i, layers).dense(fine.n_vertices)
        assert np.max(np.abs(phi - kkt_basis(coarse, fine, a, i, layers))) < 1e-8


def test_vnorm_matrix_matches_oracle():
    coarse, fine, a = prepare(2, 4, 1, CoeffSpec.trig_multiscale_2d())
    Q = RpsSolver(coarse, fine, a).Q.toarray()
    Qo = vnorm_matrix(fine, a)
    assert np.allclose(Q, Qo, rtol=1e-10, atol=1e-8 * np.abs(Qo).max())


def test_closed_form_1d():
    coarse, fine, a = prepare(1, 2, 6, CoeffSpec.constant(1.0))
    basis = RpsSolver(coarse, fine, a).solve_all(None)
    phi = basis.functions[0].dense(fine.n_vertices)
    quarter = np.flatnonzero(np.isclose(fine.vertices[:, 0], 0.25))[0]
    assert abs(phi[quarter] - 0.6875) <= 0.01
    assert abs(gram(basis)[0, 0] - 48) / 48 <= 0.02
    S, _ = coarse_solve(basis, 1.0)
    assert abs(S.S[0, 0] - 4.8) / 4.8 <= 0.02


def test_orthogonality_to_free_hats(small2d):
    f = small2d.solve_basis(small2d.n_coarse // 2, 2)
    n = small2d.fine.n_vertices
    phi = f.dense(n)
    Q = small2d.Q
    Qphi = Q @ phi
    free = [v for v in f.nodes if v not in set(small2d.coarse_vertices)]
    vphi = np.sqrt(phi @ Qphi)
    for k in free:
        assert abs(Qphi[k]) <= small2d.tol * vphi * np.sqrt(Q[k, k])


def test_minimality_under_perturbation(small2d):
    i = small2d.n_coarse // 2
    f = small2d.solve_basis(i, 2)
    n = small2d.fine.n_vertices
    phi = f.dense(n)
    free = np.array([v for v in f.nodes if v not in set(small2d.coarse_vertices)])
    Q = small2d.Q
    base = phi @ (Q @ phi)
    rng = np.random.default_rng(42)
    for _ in range(100):
        v = np.zeros(n)
        v[free] = rng.standard_normal(len(free)) * 10.0 ** rng.uniform(-6, 0)
        w = phi + v
        assert w @ (Q @ w) >= base - 1e-10 * base


def test_objective_nesting(small2d):
    i = small2d.n_coarse // 2
    objs = [small2d.solve_basis(i, l).objective for l in range(1, 5)]
    glob = small2d.solve_basis(i).objective
    assert all(b <= a * (1 + 1e-12) for a, b in zip(objs, objs[1:]))
    assert min(objs) >= glob * (1 - 1e-10)


def test_energy_identity(small2d):
    basis = small2d.solve_all(2)
    P = gram(basis, small2d.Q)
    Phi = basis.matrix()
    rng = np.random.default_rng(3)
    for _ in range(20):
        w = rng.standard_normal(len(basis))
        u = Phi @ w
        lhs = small2d.fv.vnorm_sq(u)
        assert abs(lhs - w @ P @ w) <= 1e-10 * lhs


def test_gram_inverse(small1d):
    P = gram(small1d.solve_all(None))
    T = theta(P)
    assert np.allclose(P, P.T)
    assert np.linalg.eigvalsh(P).min() > 0
    assert np.max(np.abs(P @ T - np.eye(len(P)))) < 1e-8


def test_theta_rejects_singular():
    with pytest.raises(ConditioningError):
        theta(np.ones((3, 3)))


def test_node_count_and_worker_determinism():
    coarse, fine, a = prepare(2, 4, 2, CoeffSpec.trig_multiscale_2d())
    s = RpsSolver(coarse, fine, a)
    b1 = s.solve_all(1, workers=1)
    b4 = s.solve_all(1, workers=4)
    assert len(b1) == 9
    for f1, f4 in zip(b1.functions, b4.functions):
        assert np.array_equal(f1.nodes, f4.nodes)
        assert np.array_equal(f1.values, f4.values)


def test_localized_sparsity():
    coarse, fine, a = prepare(2, 16, 2, CoeffSpec.trig_multiscale_2d())
    basis = RpsSolver(coarse, fine, a).solve_all(3)
    n_int = len(fine.interior_nodes)
    assert all(len(f.nodes) < n_int for f in basis.functions)
    assert basis.stored_nonzeros() < 0.25 * len(basis) * fine.n_vertices


def test_saturated_support_equals_global():
    coarse, fine, a = prepare(2, 4, 2, CoeffSpec.trig_multiscale_2d())
    s = RpsSolver(coarse, fine, a)
    i = coarse.nearest_coarse_node([0.5, 0.5])
    loc = s.solve_basis(i, 4)
    assert loc.support.saturated
    assert np.max(np.abs(loc.dense(fine.n_vertices)
                         - s.solve_basis(i).dense(fine.n_vertices))) < 1e-12


def test_no_refinement():
    coarse, fine, a = prepare(2, 4, 0, CoeffSpec.constant(1.0))
    s = RpsSolver(coarse, fine, a)
    # the global problem is fully constrained: basis = coarse hats
    assert kronecker_ok(s, s.solve_all(None))
    with pytest.raises(DegenerateSupportError):
        s.solve_basis(0, 1)


def test_pcg_matches_dense_and_reports_failure():
    coarse, fine, a = prepare(2, 4, 2, CoeffSpec.trig_multiscale_2d())
    dense = RpsSolver(coarse, fine, a, method="dense").solve_basis(4, 2)
    pcg = RpsSolver(coarse, fine, a, method="pcg").solve_basis(4, 2)
    assert np.max(np.abs(dense.values - pcg.values)) < 1e-8
    assert pcg.report["iterations"] > 0
    with pytest.raises(SolverError) as info:
        RpsSolver(coarse, fine, a, method="pcg", max_iter=1).solve_basis(4, 2)
    assert info.value.node == 4 and info.value.residual > 0


def test_bad_index(small2d):
    with pytest.raises(IndexError):
        small2d.solve_basis(small2d.n_coarse, 1)
