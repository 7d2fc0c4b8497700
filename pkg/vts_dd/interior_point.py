import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .config import DIAGNOSTICS_MAX_INTERFACE
from .fem import DEFAULT_LOAD, LoadVector, StiffnessAssembly, assemble_load
from .interface import SchurApproxBuilder
from .krylov import KrylovConfig, KrylovResult, solve
from .mesh import GridMesh, Partition, UnknownLayout, build_permutation
from .schur import (
    BlockJacobian,
    BlockTriangularPreconditioner,
    SchurBlocks,
    SubdomainFactorizations,
    compute_schur_blocks,
    dense_elastic_schur,
    factor_interior,
    inertia,
    interface_coupling_ratio,
)

logger = logging.getLogger('vts_dd.interior_point')


class InteriorViolationError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class OuterIterationLimitError(SolverError):
    def __init__(self, message: str, result: 'IPResult'):
        super().__init__(message)
        self.result = result


class KrylovStagnationError(SolverError):
    def __init__(self, step: int, krylov: KrylovResult, tol: float):
        self.step = step
        self.krylov = krylov
        super().__init__(
            f'GMRES did not reach relative tolerance {tol:g} at Newton step {step} '
            f'after {krylov.iterations} iterations'
        )


@dataclass(frozen=True)
class IPConfig:
    rho_low: float = 1e-2
    rho_up: float = 1.0
    volume_fraction: float = 0.5
    barrier_divisor: float = 4.0
    barrier_floor: float = 1e-6
    gmres_tol: float = 1e-6
    step_safety: float = 0.9
    max_outer: int = 50
    terminal_tol: float = 1e-8
    max_gmres: int | None = None

    def __post_init__(self):
        if not 0.0 < self.rho_low < self.volume_fraction < self.rho_up:
            raise ValueError(
                'bounds must satisfy 0 < rho_low < volume_fraction < rho_up, got '
                f'{self.rho_low}, {self.volume_fraction}, {self.rho_up}'
            )
        if self.barrier_divisor <= 1.0:
            raise ValueError(f'barrier_divisor must exceed 1, got {self.barrier_divisor}')
        if self.barrier_floor <= 0.0:
            raise ValueError(f'barrier_floor must be positive, got {self.barrier_floor}')
        if not 0.0 < self.gmres_tol < 1.0:
            raise ValueError(f'gmres_tol must lie in (0, 1), got {self.gmres_tol}')
        if not 0.0 < self.step_safety < 1.0:
            raise ValueError(f'step_safety must lie in (0, 1), got {self.step_safety}')
        if self.max_outer < 1:
            raise ValueError(f'max_outer must be positive, got {self.max_outer}')
        if self.terminal_tol <= 0.0:
            raise ValueError(f'terminal_tol must be positive, got {self.terminal_tol}')


@dataclass
class IPState:
    u: np.ndarray
    lam: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    lam0: float
    r: float = 1.0
    s: float = 1.0

    def to_vector(self, layout: UnknownLayout) -> np.ndarray:
        y = np.empty(layout.n)
        y[layout.u] = self.u
        y[layout.lam] = self.lam
        y[layout.rho] = self.rho
        y[layout.phi] = self.phi
        y[layout.psi] = self.psi
        y[layout.mu] = self.mu
        y[layout.lam0] = self.lam0
        return y

    @classmethod
    def from_vector(cls, y: np.ndarray, layout: UnknownLayout, r: float = 1.0, s: float = 1.0) -> 'IPState':
        return cls(
            u=y[layout.u].copy(),
            lam=y[layout.lam].copy(),
            rho=y[layout.rho].copy(),
            phi=y[layout.phi].copy(),
            psi=y[layout.psi].copy(),
            mu=y[layout.mu].copy(),
            lam0=float(y[layout.lam0]),
            r=r,
            s=s,
        )

    def advanced(self, delta: 'IPState', alpha: float) -> 'IPState':
        return replace(
            self,
            u=self.u + alpha * delta.u,
            lam=self.lam + alpha * delta.lam,
            rho=self.rho + alpha * delta.rho,
            phi=self.phi + alpha * delta.phi,
            psi=self.psi + alpha * delta.psi,
            mu=self.mu + alpha * delta.mu,
            lam0=self.lam0 + alpha * delta.lam0,
        )

    def check_interior(self, config: IPConfig) -> None:
        if not np.all((self.rho > config.rho_low) & (self.rho < config.rho_up)):
            raise InteriorViolationError('density left the open interval (rho_low, rho_up)')
        if not (np.all(self.phi > 0) and np.all(self.psi > 0)):
            raise InteriorViolationError('auxiliary variables phi, psi must stay positive')
        if self.r <= 0 or self.s <= 0:
            raise InteriorViolationError('barrier parameters must be positive')


@dataclass
class ResidualVector:
    u: np.ndarray
    lam: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    mass: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.u, self.lam, self.rho, self.phi, self.psi, self.mu, [self.mass]))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.to_vector())))


def fraction_to_boundary(x: np.ndarray, dx: np.ndarray, lower: float | None = None,
                         upper: float | None = None, safety: float = 0.9) -> float:
    alpha = np.inf
    if lower is not None:
        neg = dx < 0
        if np.any(neg):
            alpha = min(alpha, safety * float(np.min((lower - x[neg]) / dx[neg])))
    if upper is not None:
        pos = dx > 0
        if np.any(pos):
            alpha = min(alpha, safety * float(np.min((upper - x[pos]) / dx[pos])))
    return alpha


def step_length(state: IPState, delta: IPState, config: IPConfig, safety: float | None = None) -> float:
    """alpha = min(alpha_L, alpha_U, alpha_phi, alpha_psi, 1)."""
    safety = config.step_safety if safety is None else safety
    return min(
        fraction_to_boundary(state.rho, delta.rho, lower=config.rho_low, safety=safety),
        fraction_to_boundary(state.rho, delta.rho, upper=config.rho_up, safety=safety),
        fraction_to_boundary(state.phi, delta.phi, lower=0.0, safety=safety),
        fraction_to_boundary(state.psi, delta.psi, lower=0.0, safety=safety),
        1.0,
    )


@dataclass
class NewtonSystem:
    jacobian: BlockJacobian
    rhs: np.ndarray
    factorizations: SubdomainFactorizations
    blocks: SchurBlocks
    stiffness: sp.csr_matrix


class VTSProblem:
    """Дискретная задача VTS с барьером и разбиением ограничения массы по подобластям."""

    def __init__(self, mesh: GridMesh, partition: Partition, config: IPConfig,
                 youngs: float = 1.0, poisson: float = 0.3, load: LoadVector | None = None):
        self.mesh = mesh
        self.partition = partition
        self.config = config
        self.layout = UnknownLayout.for_partition(partition)
        self.ordering = build_permutation(partition)
        self.assembly = StiffnessAssembly(mesh, youngs=youngs, poisson=poisson)
        self.load = load or assemble_load(mesh)
        self.owner = partition.element_owner
        self.N = partition.N

        m = mesh.element_count
        q = self.load.q
        self.Q = sp.csr_matrix((q, (self.owner, np.arange(m))), shape=(self.N, m))
        self.mass_target = config.volume_fraction * float(q.sum())

    def subdomain_masses(self, rho: np.ndarray) -> np.ndarray:
        return np.bincount(self.owner, weights=self.load.q * rho, minlength=self.N)

    def compliance(self, state: IPState) -> float:
        return 0.5 * float(self.load.f @ state.u)

    def mass_error(self, state: IPState) -> float:
        return abs(float(self.load.q @ state.rho) - self.mass_target)

    def residual(self, state: IPState) -> ResidualVector:
        cfg = self.config
        state.check_interior(cfg)
        A = self.assembly.assemble_stiffness(state.rho)
        q = self.load.q
        return ResidualVector(
            u=self.load.f - A @ state.u,
            lam=state.mu - self.subdomain_masses(state.rho),
            rho=-0.5 * self.assembly.element_energies(state.u) - state.lam[self.owner] * q - state.phi + state.psi,
            phi=state.r - state.phi * (state.rho - cfg.rho_low),
            psi=state.s - state.psi * (cfg.rho_up - state.rho),
            mu=state.lam - state.lam0,
            mass=self.mass_target - float(state.mu.sum()),
        )

    def jacobian(self, state: IPState) -> sp.csr_matrix:
        """J = -dR/dy в естественном порядке неизвестных."""
        cfg = self.config
        state.check_interior(cfg)
        A = self.assembly.assemble_stiffness(state.rho)
        B = self.assembly.assemble_B(state.u)
        N = self.N
        m = self.mesh.element_count
        eye_m = sp.identity(m, format='csr')
        eye_n = sp.identity(N, format='csr')
        ones_col = sp.csr_matrix(np.ones((N, 1)))

        blocks = [
            [A, None, B, None, None, None, None],
            [None, None, self.Q, None, None, -eye_n, None],
            [B.T, self.Q.T, None, eye_m, -eye_m, None, None],
            [None, None, sp.diags(state.phi), sp.diags(state.rho - cfg.rho_low), None, None, None],
            [None, None, sp.diags(-state.psi), None, sp.diags(cfg.rho_up - state.rho), None, None],
            [None, -eye_n, None, None, None, None, ones_col],
            [None, None, None, None, None, ones_col.T, None],
        ]
        return sp.bmat(blocks, format='csr')

    def block_jacobian(self, state: IPState) -> BlockJacobian:
        return BlockJacobian.from_matrix(self.jacobian(state), self.ordering)

    def initial_state(self) -> IPState:
        return initial_state(self)

    def newton_system(self, state: IPState, workers: int | None = None) -> NewtonSystem:
        R = self.residual(state).to_vector()
        J = self.block_jacobian(state)
        f = factor_interior(J, workers=workers)
        return NewtonSystem(
            jacobian=J,
            rhs=self.ordering.to_permuted(R),
            factorizations=f,
            blocks=compute_schur_blocks(f),
            stiffness=self.assembly.assemble_stiffness(state.rho),
        )


def initial_state(problem: VTSProblem) -> IPState:
    cfg = problem.config
    m = problem.mesh.element_count
    rho = np.full(m, cfg.volume_fraction)
    A = problem.assembly.assemble_stiffness(rho)
    try:
        u = splu(sp.csc_matrix(A)).solve(problem.load.f)
    except RuntimeError as e:
        raise SolverError('initial stiffness matrix is singular') from e

    r = s = 1.0
    return IPState(
        u=u,
        lam=np.zeros(problem.N),
        rho=rho,
        phi=r / (rho - cfg.rho_low),
        psi=s / (cfg.rho_up - rho),
        mu=problem.subdomain_masses(rho),
        lam0=0.0,
        r=r,
        s=s,
    )


@dataclass
class StepRecord:
    step: int
    phase: str
    gmres_iters: int
    r: float
    s: float
    alpha: float
    residual_before: float
    residual_after: float
    compliance: float
    residual_decreased: bool = True
    diagnostics: dict | None = None

    @property
    def residual_norm(self) -> float:
        return self.residual_after


@dataclass
class IPResult:
    state: IPState
    steps: list[StepRecord] = field(default_factory=list)
    initial_compliance: float = 0.0
    converged: bool = False
    final_residual: float = np.inf
    mass_error: float = np.inf

    @property
    def newton_count(self) -> int:
        return len(self.steps)

    @property
    def gmres_counts(self) -> list[int]:
        return [rec.gmres_iters for rec in self.steps]

    @property
    def total_gmres(self) -> int:
        return sum(self.gmres_counts)

    @property
    def compliance_history(self) -> list[float]:
        return [self.initial_compliance] + [rec.compliance for rec in self.steps]


def step_diagnostics(system: NewtonSystem, problem: VTSProblem) -> dict:
    """Инерция S, спектр S22 и ||E|| / ||S_ΓΓ|| (только для малых интерфейсов)."""
    S = system.blocks.dense()
    n_g = system.blocks.n_gamma
    neg, zero, pos = inertia(S)
    s22_max = float(np.max(np.linalg.eigvalsh(0.5 * (system.blocks.S22 + system.blocks.S22.T))))
    diag = {
        'negative_inertia': neg,
        'zero_inertia': zero,
        'positive_inertia': pos,
        's22_max_eig': s22_max,
    }
    if n_g:
        S_gg = dense_elastic_schur(system.stiffness, problem.partition, problem.ordering)
        diag['coupling_ratio'] = interface_coupling_ratio(S[:n_g, :n_g], S_gg)
    return diag


def ip_solve(config: IPConfig, mesh: GridMesh, partition: Partition, precond_choice: str = 's2', *,
             theta: float | None = None, lanczos_k: int | None = None, lanczos_mode: str = 'inverse',
             youngs: float = 1.0, poisson: float = 0.3, load: float = DEFAULT_LOAD,
             diagnostics: bool = False,
             on_step: Callable[[StepRecord], None] | None = None,
             workers: int | None = None) -> IPResult:
    problem = VTSProblem(
        mesh, partition, config, youngs=youngs, poisson=poisson, load=assemble_load(mesh, load),
    )
    builder = SchurApproxBuilder(
        precond_choice, partition, problem.ordering,
        theta=theta, k=lanczos_k, mode=lanczos_mode,
    )
    diagnostics = diagnostics and problem.ordering.n_interface <= DIAGNOSTICS_MAX_INTERFACE

    state = initial_state(problem)
    result = IPResult(state=state, initial_compliance=problem.compliance(state))
    logger.info(
        'ip_solve: ny=%d N=%d n=%d n_gamma=%d precond=%s',
        mesh.ny, partition.N, problem.layout.n, partition.n_gamma, precond_choice,
    )

    def _barrier_active(st: IPState) -> bool:
        return st.r >= config.barrier_floor or st.s >= config.barrier_floor

    for step in range(1, config.max_outer + 1):
        phase = 'barrier' if _barrier_active(state) else 'terminal'
        residual_before = problem.residual(state).norm_inf()
        if phase == 'terminal' and residual_before <= config.terminal_tol:
            result.converged = True
            break

        system = problem.newton_system(state, workers=workers)
        approx = builder.build(system.blocks, system.stiffness)
        precond = BlockTriangularPreconditioner(system.factorizations, approx)
        kcfg = KrylovConfig(tol=config.gmres_tol, max_iter=config.max_gmres, flexible=not precond.linear)
        krylov = solve(system.jacobian.matvec, precond.apply_inverse, system.rhs, kcfg)
        if not krylov.converged:
            result.state = state
            raise KrylovStagnationError(step, krylov, config.gmres_tol)

        delta = IPState.from_vector(problem.ordering.to_natural(krylov.x), problem.layout)
        alpha = step_length(state, delta, config)
        state = state.advanced(delta, alpha)
        residual_after = problem.residual(state).norm_inf()

        record = StepRecord(
            step=step,
            phase=phase,
            gmres_iters=krylov.iterations,
            r=state.r,
            s=state.s,
            alpha=alpha,
            residual_before=residual_before,
            residual_after=residual_after,
            compliance=problem.compliance(state),
            residual_decreased=residual_after < residual_before,
            diagnostics=step_diagnostics(system, problem) if diagnostics else None,
        )
        if not record.residual_decreased:
            logger.warning(
                'residual did not decrease at step %d: %.3e -> %.3e',
                step, residual_before, residual_after,
            )
        logger.info(
            'step %d (%s): gmres=%d r=%.2e s=%.2e alpha=%.3f |R|=%.3e compliance=%.6g',
            step, phase, krylov.iterations, state.r, state.s, alpha, residual_after, record.compliance,
        )
        if record.diagnostics:
            logger.info('step %d diagnostics: %s', step, record.diagnostics)
        result.steps.append(record)
        if on_step is not None:
            on_step(record)

        if phase == 'barrier':
            state = replace(state, r=state.r / config.barrier_divisor, s=state.s / config.barrier_divisor)
    else:
        residual = problem.residual(state).norm_inf()
        if not _barrier_active(state) and residual <= config.terminal_tol:
            result.converged = True

    result.state = state
    result.final_residual = problem.residual(state).norm_inf()
    result.mass_error = problem.mass_error(state)
    if not result.converged:
        raise OuterIterationLimitError(
            f'no convergence within {config.max_outer} Newton steps '
            f'(|R|={result.final_residual:.3e}, r={state.r:.2e})',
            result,
        )
    logger.info(
        'converged: newton=%d total_gmres=%d compliance=%.6g mass_error=%.2e',
        result.newton_count, result.total_gmres, problem.compliance(state), result.mass_error,
    )
    return result
