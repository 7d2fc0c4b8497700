import numpy as np

from vts_dd.diagnostics import exact_schur_iterations, sparse_pattern_uncoupled
from vts_dd.fem import StiffnessAssembly
from vts_dd.interface import DenseSchurApprox, SchurApproxBuilder
from vts_dd.interior_point import IPConfig, VTSProblem
from vts_dd.mesh import build_mesh, build_partition, build_permutation
from vts_dd.schur import (
    BlockTriangularPreconditioner,
    DenseSizeError,
    apply_P_inverse,
    check_dense_size,
    dense_elastic_schur,
    factor_interior,
    inertia,
    interface_coupling_ratio,
    schur_on_dofs,
)


def _problem(ny=4, p=2):
    mesh = build_mesh(ny)
    return VTSProblem(mesh, build_partition(mesh, p), IPConfig())


def test_block_jacobian_is_permuted_natural_jacobian():
    problem = _problem()
    state = problem.initial_state()
    J = problem.jacobian(state).toarray()
    bj = problem.block_jacobian(state)
    perm = problem.ordering.perm
    assert np.allclose(bj.matrix.toarray(), J[np.ix_(perm, perm)])

    v = np.random.default_rng(0).standard_normal(problem.layout.n)
    assert np.allclose(bj.matvec(problem.ordering.to_permuted(v)), problem.ordering.to_permuted(J @ v))


def test_interior_blocks_do_not_couple_across_subdomains():
    problem = _problem(ny=8)
    bj = problem.block_jacobian(problem.initial_state())
    ni = problem.ordering.n_interior
    assert sparse_pattern_uncoupled(bj.matrix[:ni, :ni], problem.ordering.interior_slices)


def test_interface_block_layout():
    problem = _problem()
    bj = problem.block_jacobian(problem.initial_state())
    n_g, N = bj.n_gamma, bj.N
    G = bj.J_GG.toarray()
    assert np.allclose(G[n_g:n_g + N, n_g:n_g + N], 0.0)
    assert np.allclose(G[n_g:n_g + N, -1], 1.0)
    assert np.allclose(G[-1, n_g:n_g + N], 1.0)
    assert G[-1, -1] == 0.0
    assert np.allclose(G[:n_g, n_g:], 0.0)


def test_schur_blocks_match_dense_elimination():
    problem = _problem()
    system = problem.newton_system(problem.initial_state())
    Jp = system.jacobian.matrix.toarray()
    ni = problem.ordering.n_interior
    S_ref = Jp[ni:, ni:] - Jp[ni:, :ni] @ np.linalg.solve(Jp[:ni, :ni], Jp[:ni, ni:])

    blocks = system.blocks
    n_g, N = blocks.n_gamma, blocks.N
    assert np.allclose(blocks.dense(), S_ref, atol=1e-9)
    assert np.allclose(blocks.S12, S_ref[:n_g, n_g:n_g + N], atol=1e-9)
    assert np.allclose(blocks.S22, S_ref[n_g:n_g + N, n_g:n_g + N], atol=1e-9)
    assert np.allclose(blocks.ones, 1.0)
    assert np.allclose(blocks.dense_S11(), S_ref[:n_g, :n_g], atol=1e-9)

    v = np.random.default_rng(1).standard_normal(n_g)
    assert np.allclose(blocks.S11 @ v, S_ref[:n_g, :n_g] @ v, atol=1e-9)


def test_schur_inertia_has_n_negative_eigenvalues():
    problem = _problem()
    system = problem.newton_system(problem.initial_state())
    neg, zero, pos = inertia(system.blocks.dense())
    assert neg == problem.N
    assert zero == 0
    assert pos == system.blocks.n_gamma + 1


def test_parallel_factorization_matches_serial():
    problem = _problem(ny=8)
    bj = problem.block_jacobian(problem.initial_state())
    v = np.random.default_rng(2).standard_normal(problem.ordering.n_interior)
    serial = factor_interior(bj, workers=1).solve(v)
    threaded = factor_interior(bj, workers=4).solve(v)
    assert np.array_equal(serial, threaded)


def test_block_triangular_preconditioner_inverts_its_matvec():
    problem = _problem()
    system = problem.newton_system(problem.initial_state())
    approx = DenseSchurApprox('exact', system.blocks.dense())
    precond = BlockTriangularPreconditioner(system.factorizations, approx)
    assert precond.linear

    z = np.random.default_rng(3).standard_normal(problem.layout.n)
    assert np.allclose(precond.apply_inverse(precond.matvec(z)), z)
    assert precond.applications == 1
    assert np.allclose(apply_P_inverse(system.factorizations, approx, precond.matvec(z)), z)


def test_exact_schur_gmres_needs_at_most_three_iterations():
    assert exact_schur_iterations(ny=4, p=2) <= 3


def test_elastic_schur_is_spd_and_matches_dense_reference():
    mesh = build_mesh(4)
    partition = build_partition(mesh, 2)
    ordering = build_permutation(partition)
    A = StiffnessAssembly(mesh).assemble_stiffness(np.full(mesh.element_count, 0.5))
    S_gg = dense_elastic_schur(A, partition, ordering)
    assert np.all(np.linalg.eigvalsh(S_gg) > 0)

    g = ordering.interface_u_dofs
    rest = np.setdiff1d(np.arange(mesh.n_u), g)
    Ad = A.toarray()
    ref = Ad[np.ix_(g, g)] - Ad[np.ix_(g, rest)] @ np.linalg.solve(Ad[np.ix_(rest, rest)], Ad[np.ix_(rest, g)])
    assert np.allclose(S_gg, ref, atol=1e-10)
    assert np.allclose(schur_on_dofs(A, g, [rest]), ref, atol=1e-10)


def test_coupling_ratio_is_finite():
    problem = _problem()
    system = problem.newton_system(problem.initial_state())
    S11 = system.blocks.dense_S11()
    S_gg = dense_elastic_schur(system.stiffness, problem.partition, problem.ordering)
    ratio = interface_coupling_ratio(S11, S_gg)
    assert np.isfinite(ratio)
    assert ratio >= 0.0
    assert interface_coupling_ratio(S_gg, S_gg) == 0.0


def test_dense_size_guard():
    check_dense_size(10, 'test', limit=10)
    try:
        check_dense_size(11, 'test', limit=10)
    except DenseSizeError as e:
        assert 'test' in str(e)
        return
    raise AssertionError('size guard should trigger')


def test_apply_P_inverse_is_linear():
    problem = _problem()
    system = problem.newton_system(problem.initial_state())
    rng = np.random.default_rng(13)
    v, w = rng.standard_normal((2, problem.layout.n))
    for variant in ('s0', 's1', 'exact'):
        builder = SchurApproxBuilder(variant, problem.partition, problem.ordering, theta=0.5)
        approx = builder.build(system.blocks, system.stiffness)

        def _apply(x):
            return apply_P_inverse(system.factorizations, approx, x)

        lhs = _apply(2.0 * v - 0.5 * w)
        rhs = 2.0 * _apply(v) - 0.5 * _apply(w)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs), variant
