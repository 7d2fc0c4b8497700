import logging
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem import StiffnessAssembly, assemble_interface_pencil
from .interface import (
    DenseSchurApprox,
    eigprop_check,
    fractional_norm_dense,
    generalized_lanczos,
    spectral_equivalence_bounds,
)
from .interior_point import IPConfig, IPState, VTSProblem, initial_state
from .krylov import KrylovConfig, gmres
from .mesh import (
    build_mesh,
    build_partition,
    build_permutation,
    interface_size_closed_form,
    total_unknowns,
)
from .schur import BlockTriangularPreconditioner, dense_elastic_schur, inertia

logger = logging.getLogger('vts_dd.diagnostics')

# (1/h, N) -> n_Γ
REFERENCE_INTERFACE_SIZES = {
    (64, 4): 384, (64, 16): 1140, (64, 64): 2604,
    (128, 4): 768, (128, 16): 2292, (128, 64): 5292,
    (256, 4): 1536, (256, 16): 4584, (256, 64): 10668,
}
# the single n column of the table corresponds to different N per row
REFERENCE_UNKNOWNS = {64: (4, 41355), 128: (4, 164619), 256: (64, 657027)}
# enumeration gives 4596 here; the remaining eight cells agree exactly
KNOWN_TABLE_DISCREPANCIES = {(256, 16)}


@dataclass
class CheckOutcome:
    name: str
    ok: bool
    detail: str = ''
    known_discrepancy: bool = False


def check_tables() -> list[CheckOutcome]:
    outcomes = []
    for (ny, N), expected in REFERENCE_INTERFACE_SIZES.items():
        p = int(round(N ** 0.5))
        partition = build_partition(build_mesh(ny), p)
        counted = partition.n_gamma
        closed = interface_size_closed_form(ny, p)
        known = (ny, N) in KNOWN_TABLE_DISCREPANCIES
        ok = counted == closed and (counted == expected or known)
        outcomes.append(CheckOutcome(
            name=f'n_gamma h=1/{ny} N={N}',
            ok=ok,
            detail=f'enumerated={counted} closed_form={closed} table={expected}',
            known_discrepancy=known and counted != expected,
        ))
    for ny, (N, expected) in REFERENCE_UNKNOWNS.items():
        p = int(round(N ** 0.5))
        ordering = build_permutation(build_partition(build_mesh(ny), p))
        counted = ordering.n
        outcomes.append(CheckOutcome(
            name=f'n h=1/{ny} N={N}',
            ok=counted == expected == total_unknowns(ny, N),
            detail=f'permutation={counted} formula={total_unknowns(ny, N)} table={expected}',
        ))
    return outcomes


def unknowns_grid(ny_values=(64, 128, 256), n_values=(4, 16, 64)) -> dict[tuple[int, int], int]:
    """n(h, N) для всех сочетаний."""
    return {(ny, N): total_unknowns(ny, N) for ny in ny_values for N in n_values}


def random_interior_state(problem: VTSProblem, rng: np.random.Generator) -> IPState:
    cfg = problem.config
    m = problem.mesh.element_count
    N = problem.N
    span = cfg.rho_up - cfg.rho_low
    return IPState(
        u=rng.standard_normal(problem.mesh.n_u),
        lam=rng.standard_normal(N),
        rho=cfg.rho_low + span * rng.uniform(0.1, 0.9, m),
        phi=rng.uniform(0.5, 2.0, m),
        psi=rng.uniform(0.5, 2.0, m),
        mu=rng.standard_normal(N),
        lam0=float(rng.standard_normal()),
        r=0.5,
        s=0.25,
    )


def finite_difference_jacobian(problem: VTSProblem, state: IPState, eps: float = 1e-6) -> np.ndarray:
    """-dR/dy центральными разностями, плотно."""
    layout = problem.layout
    y = state.to_vector(layout)
    J = np.zeros((layout.n, layout.n))
    for j in range(layout.n):
        yp = y.copy()
        ym = y.copy()
        yp[j] += eps
        ym[j] -= eps
        rp = problem.residual(IPState.from_vector(yp, layout, state.r, state.s)).to_vector()
        rm = problem.residual(IPState.from_vector(ym, layout, state.r, state.s)).to_vector()
        J[:, j] = -(rp - rm) / (2.0 * eps)
    return J


def jacobian_fd_error(ny: int, p: int, seed: int = 0) -> float:
    mesh = build_mesh(ny)
    problem = VTSProblem(mesh, build_partition(mesh, p), IPConfig())
    state = random_interior_state(problem, np.random.default_rng(seed))
    J = problem.jacobian(state).toarray()
    J_fd = finite_difference_jacobian(problem, state)
    return float(np.linalg.norm(J - J_fd) / np.linalg.norm(J))


def coupling_identity_error(ny: int = 4, samples: int = 100, seed: int = 0) -> float:
    mesh = build_mesh(ny)
    assembly = StiffnessAssembly(mesh)
    rng = np.random.default_rng(seed)
    worst = 0.0
    d = mesh.dirichlet_dofs
    for _ in range(samples):
        u = rng.standard_normal(mesh.n_u)
        rho = rng.uniform(0.1, 1.0, mesh.element_count)
        A = assembly.assemble_stiffness(rho)
        lhs = assembly.assemble_B(u) @ rho
        rhs = A @ u
        rhs[d] -= u[d]
        worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(A @ u))
    return float(worst)


def exact_schur_iterations(ny: int = 8, p: int = 2) -> int:
    mesh = build_mesh(ny)
    problem = VTSProblem(mesh, build_partition(mesh, p), IPConfig())
    system = problem.newton_system(initial_state(problem))
    approx = DenseSchurApprox('exact', system.blocks.dense())
    precond = BlockTriangularPreconditioner(system.factorizations, approx)
    res = gmres(system.jacobian.matvec, precond.apply_inverse, system.rhs, KrylovConfig(tol=1e-6))
    return res.iterations


def random_eigprop_instance(rng: np.random.Generator, n_gamma: int = 12, N: int = 3):
    a = rng.standard_normal((n_gamma, n_gamma))
    b = rng.standard_normal((n_gamma, n_gamma))
    K = a @ a.T + n_gamma * np.eye(n_gamma)
    G = b @ b.T + n_gamma * np.eye(n_gamma)
    D = rng.standard_normal((n_gamma, N))
    c = rng.standard_normal((N, N))
    F = -(c @ c.T + N * np.eye(N))
    return K, G, D, F


def eigprop_worst(seeds: int = 20) -> tuple[int, float]:
    """(число нарушений кратности N+1, худшее расхождение редуцированного спектра)."""
    failures = 0
    worst = 0.0
    for seed in range(seeds):
        report = eigprop_check(*random_eigprop_instance(np.random.default_rng(seed)))
        failures += 0 if report.holds else 1
        worst = max(worst, report.reduced_mismatch)
    return failures, worst


def random_spd_pencil(rng: np.random.Generator, n: int):
    a = rng.standard_normal((n, n))
    b = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n), b @ b.T + n * np.eye(n)


def fractional_norm_errors(n: int = 20, seed: int = 0) -> dict[str, float]:
    L, M = random_spd_pencil(np.random.default_rng(seed), n)
    h1 = fractional_norm_dense(L, M, 1.0).H
    h0 = fractional_norm_dense(L, M, 0.0).H
    half = fractional_norm_dense(L, M, 0.5).H
    sqrt_err = np.linalg.norm(half @ np.linalg.solve(M, half) - L) / np.linalg.norm(L)
    fact = generalized_lanczos(L, M, n, np.ones(n))
    ref = np.sort(np.linalg.eigvals(np.linalg.solve(M, L)).real)
    lanczos_err = np.max(np.abs(np.sort(np.linalg.eigvalsh(fact.T)) - ref) / ref)
    return {
        'H1=M': float(np.max(np.abs(h1 - M))),
        'H0=L': float(np.max(np.abs(h0 - L))),
        'sqrt': float(sqrt_err),
        'lanczos': float(lanczos_err),
    }


def schur_consistency(ny: int = 8, p: int = 2) -> tuple[float, tuple[int, int, int]]:
    mesh = build_mesh(ny)
    problem = VTSProblem(mesh, build_partition(mesh, p), IPConfig())
    system = problem.newton_system(initial_state(problem))
    S = system.blocks.dense()

    Jp = system.jacobian.matrix.toarray()
    ni = problem.ordering.n_interior
    S_ref = Jp[ni:, ni:] - Jp[ni:, :ni] @ np.linalg.solve(Jp[:ni, :ni], Jp[:ni, ni:])
    err = float(np.linalg.norm(S - S_ref) / np.linalg.norm(S_ref))
    return err, inertia(S)


def spectral_probe(ny_values=(16, 32), p: int = 2, theta: float = 0.5) -> dict[int, tuple[float, float]]:
    """Границы обобщённого спектра (S_ΓΓ, H_θ ⊕ H_θ) при равномерной плотности."""
    bounds = {}
    for ny in ny_values:
        mesh = build_mesh(ny)
        partition = build_partition(mesh, p)
        ordering = build_permutation(partition)
        config = IPConfig()
        A = StiffnessAssembly(mesh).assemble_stiffness(np.full(mesh.element_count, config.volume_fraction))
        S_gg = dense_elastic_schur(A, partition, ordering)
        pencil = assemble_interface_pencil(partition)
        H = fractional_norm_dense(pencil.L, pencil.M, theta).block()
        bounds[ny] = spectral_equivalence_bounds(S_gg, H)
    return bounds


def _property_suite() -> list[tuple[str, Callable[[], tuple[bool, str]]]]:
    def _tables():
        bad = [o for o in check_tables() if not o.ok]
        return not bad, f'{len(bad)} mismatches'

    def _jacobian():
        errs = [jacobian_fd_error(ny, p, seed) for ny in (2, 4) for p in (1, 2) for seed in (0, 1)]
        return max(errs) <= 1e-5, f'max rel err {max(errs):.2e}'

    def _coupling():
        err = coupling_identity_error()
        return err <= 1e-12, f'max rel err {err:.2e}'

    def _exact():
        its = exact_schur_iterations()
        return its <= 3, f'{its} iterations'

    def _eigprop():
        failures, worst = eigprop_worst()
        return failures == 0 and worst <= 1e-8, f'failures={failures} mismatch={worst:.2e}'

    def _fractional():
        errs = fractional_norm_errors()
        ok = errs['H1=M'] <= 1e-12 and errs['H0=L'] <= 1e-12 and errs['sqrt'] <= 1e-10
        ok = ok and errs['lanczos'] <= 1e-8
        return ok, ', '.join(f'{k}={v:.1e}' for k, v in errs.items())

    def _schur():
        err, (neg, zero, pos) = schur_consistency()
        return err <= 1e-10 and neg == 4 and zero == 0, f'rel err {err:.2e}, inertia (-{neg}, 0:{zero}, +{pos})'

    def _spectral():
        bounds = spectral_probe()
        ratios = {ny: hi / lo for ny, (lo, hi) in bounds.items()}
        values = list(ratios.values())
        ok = all(lo > 0 for lo, _ in bounds.values()) and max(values) / min(values) < 4.0
        return ok, ', '.join(f'ny={ny}: [{lo:.3g}, {hi:.3g}]' for ny, (lo, hi) in bounds.items())

    return [
        ('dof accounting', _tables),
        ('jacobian = -dR/dy', _jacobian),
        ('coupling identity B(u)rho', _coupling),
        ('exact Schur GMRES count', _exact),
        ('constraint pencil unit eigenvalues', _eigprop),
        ('fractional norm identities', _fractional),
        ('Schur consistency and inertia', _schur),
        ('spectral equivalence probe', _spectral),
    ]


def run_properties(name_filter: str | None = None) -> list[CheckOutcome]:
    outcomes = []
    for name, check in _property_suite():
        if name_filter and name_filter not in name:
            continue
        started = time.monotonic()
        try:
            ok, detail = check()
        except Exception as e:
            logger.exception('Property check %r raised', name)
            ok, detail = False, f'{type(e).__name__}: {e}'
        elapsed = time.monotonic() - started
        outcomes.append(CheckOutcome(name=name, ok=bool(ok), detail=f'{detail} ({elapsed:.1f}s)'))
    return outcomes


def format_outcomes(outcomes: list[CheckOutcome]) -> str:
    rows = []
    for o in outcomes:
        if o.known_discrepancy:
            icon = '⚠'
        else:
            icon = '✅' if o.ok else '❌'
        rows.append(f'{icon} {o.name}: {o.detail}')
    return '\n'.join(rows)


def sparse_pattern_uncoupled(J: sp.spmatrix, slices) -> bool:
    """Нет ненулевых элементов между внутренними группами разных подобластей."""
    J = sp.coo_matrix(J)
    group = np.full(J.shape[0], -1)
    for k, s in enumerate(slices):
        group[s] = k
    gr, gc = group[J.row], group[J.col]
    cross = (gr >= 0) & (gc >= 0) & (gr != gc) & (J.data != 0)
    return not np.any(cross)


def main() -> int:
    outcomes = check_tables() + run_properties()
    print(format_outcomes(outcomes))
    return 0 if all(o.ok for o in outcomes) else 1


if __name__ == '__main__':
    raise SystemExit(main())
