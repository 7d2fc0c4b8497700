import numpy as np

from vts_dd.diagnostics import random_eigprop_instance, random_spd_pencil
from vts_dd.fem import assemble_interface_pencil
from vts_dd.interface import (
    DenseSchurApprox,
    LanczosSchurApprox,
    SchurApproxBuilder,
    build_schur_approx,
    constraint_bordered,
    default_lanczos_k,
    default_theta,
    eigprop_check,
    fractional_norm_dense,
    generalized_lanczos,
    spectral_equivalence_bounds,
)
from vts_dd.interior_point import IPConfig, VTSProblem
from vts_dd.krylov import KrylovConfig, solve
from vts_dd.mesh import build_mesh, build_partition
from vts_dd.schur import BlockTriangularPreconditioner


def _newton_system(ny=4, p=2):
    mesh = build_mesh(ny)
    problem = VTSProblem(mesh, build_partition(mesh, p), IPConfig())
    return problem, problem.newton_system(problem.initial_state())


def test_default_parameters():
    assert default_theta(4) == 0.5
    assert default_theta(16) == 0.6
    assert default_theta(64) == 0.7
    assert default_lanczos_k(384) == 20
    assert default_lanczos_k(1) == 1


def test_fractional_norm_end_points_and_square_root():
    L, M = random_spd_pencil(np.random.default_rng(0), 15)
    assert np.allclose(fractional_norm_dense(L, M, 1.0).H, M)
    assert np.allclose(fractional_norm_dense(L, M, 0.0).H, L)

    half = fractional_norm_dense(L, M, 0.5).H
    assert np.allclose(half, half.T)
    assert np.allclose(half @ np.linalg.solve(M, half), L, rtol=1e-8, atol=1e-8)


def test_fractional_norm_block_duplicates_component():
    L, M = random_spd_pencil(np.random.default_rng(1), 4)
    norm = fractional_norm_dense(L, M, 0.3)
    block = norm.block()
    assert block.shape == (8, 8)
    assert np.allclose(block[:4, :4], norm.H)
    assert np.allclose(block[4:, 4:], norm.H)
    assert np.allclose(block[:4, 4:], 0.0)


def test_fractional_norm_rejects_theta_outside_unit_interval():
    L, M = random_spd_pencil(np.random.default_rng(2), 3)
    try:
        fractional_norm_dense(L, M, 1.5)
    except ValueError:
        return
    raise AssertionError('theta=1.5 should be rejected')


def test_generalized_lanczos_relations():
    n = 12
    A, B = random_spd_pencil(np.random.default_rng(3), n)
    fact = generalized_lanczos(A, B, 6, np.ones(n))
    V = fact.V
    assert fact.k == 6
    assert np.allclose(V.T @ B @ V, np.eye(6), atol=1e-10)
    assert np.allclose(V.T @ A @ V, fact.T, atol=1e-10)

    lhs = np.linalg.solve(B, A @ V)
    e_k = np.zeros(6)
    e_k[-1] = 1.0
    rhs = V @ fact.T + fact.beta_next * np.outer(fact.v_next, e_k)
    assert np.allclose(lhs, rhs, atol=1e-8)


def test_generalized_lanczos_full_depth_recovers_spectrum():
    n = 10
    A, B = random_spd_pencil(np.random.default_rng(4), n)
    fact = generalized_lanczos(A, B, n, np.arange(1.0, n + 1))
    ref = np.sort(np.linalg.eigvals(np.linalg.solve(B, A)).real)
    assert np.allclose(np.sort(np.linalg.eigvalsh(fact.T)), ref, rtol=1e-8)


def test_generalized_lanczos_breakdown_on_invariant_start():
    n = 6
    _, B = random_spd_pencil(np.random.default_rng(5), n)
    fact = generalized_lanczos(2.0 * B, B, 4, np.ones(n))
    assert fact.breakdown
    assert fact.k == 1
    assert np.isclose(fact.alpha[0], 2.0)


def test_matrix_function_of_tridiagonal():
    n = 8
    A, B = random_spd_pencil(np.random.default_rng(6), n)
    fact = generalized_lanczos(A, B, 5, np.ones(n))
    sq = fact.matrix_function(np.sqrt)
    assert np.allclose(sq @ sq, fact.T, atol=1e-10)


def test_constraint_bordered_layout():
    S12 = np.arange(6.0).reshape(3, 2)
    S22 = -np.eye(2)
    out = constraint_bordered(np.eye(3), S12, S22)
    assert out.shape == (6, 6)
    assert np.allclose(out, out.T)
    assert np.allclose(out[3:5, 5], 1.0)
    assert out[5, 5] == 0.0
    assert np.allclose(out[:3, 5], 0.0)


def test_s2_full_depth_matches_s1_for_both_modes():
    problem, system = _newton_system()
    blocks = system.blocks
    pencil = assemble_interface_pencil(problem.partition)
    n_h = pencil.size
    theta = 0.5
    s1 = build_schur_approx('s1', blocks, pencil, theta)
    v = np.random.default_rng(7).standard_normal(s1.size)
    expected = s1.apply_inverse(v)

    for mode in ('inverse', 'direct'):
        s2 = build_schur_approx('s2', blocks, pencil, theta, k=n_h, mode=mode)
        assert isinstance(s2, LanczosSchurApprox)
        assert not s2.linear
        got = s2.apply_inverse(v)
        assert np.allclose(got, expected, rtol=1e-6, atol=1e-8 * np.abs(expected).max())

        rng = np.random.default_rng(11)
        fixed = s2.factorize(rng.standard_normal(n_h), rng.standard_normal(n_h))
        assert np.allclose(fixed.apply_inverse(v), expected, rtol=1e-6, atol=1e-8 * np.abs(expected).max())


def test_s2_partial_depth_is_nonsingular_on_its_argument():
    problem, system = _newton_system()
    pencil = assemble_interface_pencil(problem.partition)
    s2 = build_schur_approx('s2', system.blocks, pencil, 0.5, k=3)
    s1 = build_schur_approx('s1', system.blocks, pencil, 0.5)
    v = np.random.default_rng(8).standard_normal(s2.size)
    z = s2.apply_inverse(v)
    assert np.all(np.isfinite(z))
    assert np.linalg.norm(z) > 0
    # ранг 2k + N + 1 меньше размера S1
    assert not np.allclose(z, s1.apply_inverse(v))


def test_builder_variants():
    problem, system = _newton_system()
    for variant in ('s0', 's1', 'exact'):
        builder = SchurApproxBuilder(variant, problem.partition, problem.ordering, theta=0.5)
        approx = builder.build(system.blocks, system.stiffness)
        assert isinstance(approx, DenseSchurApprox)
        v = np.random.default_rng(9).standard_normal(approx.size)
        assert np.allclose(approx.matvec(approx.apply_inverse(v)), v)

    builder = SchurApproxBuilder('s2', problem.partition, problem.ordering)
    approx = builder.build(system.blocks)
    assert approx.k == default_lanczos_k(problem.partition.n_gamma)
    assert approx.theta == 0.5


def test_build_schur_approx_argument_errors():
    _, system = _newton_system()
    for args in (('s3', system.blocks), ('s0', system.blocks), ('s1', system.blocks)):
        try:
            build_schur_approx(*args)
        except ValueError:
            continue
        raise AssertionError(f'{args[0]} should be rejected')


def test_constraint_pencil_unit_eigenvalues_on_random_instances():
    for seed in range(5):
        K, G, D, F = random_eigprop_instance(np.random.default_rng(seed))
        report = eigprop_check(K, G, D, F)
        assert report.holds, report.unit_count
        assert report.reduced_mismatch <= 1e-8


def test_spectral_bounds_of_identical_matrices():
    _, M = random_spd_pencil(np.random.default_rng(10), 6)
    lo, hi = spectral_equivalence_bounds(M, M)
    assert np.isclose(lo, 1.0)
    assert np.isclose(hi, 1.0)


def _superposition_error(apply_inverse, v, w):
    lhs = apply_inverse(2.0 * v - 0.5 * w)
    rhs = 2.0 * apply_inverse(v) - 0.5 * apply_inverse(w)
    return np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)


def test_schur_approximations_are_linear():
    problem, system = _newton_system()
    rng = np.random.default_rng(12)
    for variant in ('s0', 's1', 'exact'):
        builder = SchurApproxBuilder(variant, problem.partition, problem.ordering, theta=0.5)
        approx = builder.build(system.blocks, system.stiffness)
        v, w = rng.standard_normal((2, approx.size))
        assert _superposition_error(approx.apply_inverse, v, w) <= 1e-12, variant

    pencil = assemble_interface_pencil(problem.partition)
    s2 = build_schur_approx('s2', system.blocks, pencil, 0.5, k=pencil.size)
    fixed = s2.factorize(rng.standard_normal(pencil.size), rng.standard_normal(pencil.size))
    v, w = rng.standard_normal((2, s2.size))
    assert _superposition_error(fixed.apply_inverse, v, w) <= 1e-12


def test_s2_first_newton_system_terminates_within_interface_size():
    problem, system = _newton_system(ny=16)
    builder = SchurApproxBuilder('s2', problem.partition, problem.ordering)
    precond = BlockTriangularPreconditioner(system.factorizations, builder.build(system.blocks))
    res = solve(system.jacobian.matvec, precond.apply_inverse, system.rhs, KrylovConfig(flexible=True))
    assert res.converged
    assert res.iterations <= system.blocks.n_gamma + problem.N + 1
