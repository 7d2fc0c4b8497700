"""Приближения S~ интерфейсного дополнения Шура: S0, S1, S2.

Все варианты сохраняют блоки ограничений (S12, S22, 1_N) и заменяют только
ведущий блок перемещений:

    S0: S_ΓΓ (упругое дополнение Шура), плотно
    S1: H = H_θ ⊕ H_θ (дискретная дробная норма), плотно
    S2: частичная ограниченная факторизация Ланцоша для S1, O(k n_Γ) на применение
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fem import InterfacePencil, assemble_interface_pencil
from .mesh import DofOrdering, Partition
from .schur import SchurBlocks, check_dense_size, dense_elastic_schur

logger = logging.getLogger('vts_dd.interface')

VARIANTS = ('s0', 's1', 's2', 'exact')
LANCZOS_MODES = ('inverse', 'direct')


class InterfacePreconditionerError(RuntimeError):
    pass


def default_theta(N: int) -> float:
    if N <= 4:
        return 0.5
    if N <= 16:
        return 0.6
    return 0.7


def default_lanczos_k(n_gamma: int) -> int:
    return max(1, math.ceil(math.sqrt(n_gamma)))


def _dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


@dataclass(frozen=True)
class FractionalNorm:
    theta: float
    H: np.ndarray = field(repr=False)

    def block(self) -> np.ndarray:
        """H = H_θ ⊕ H_θ для двух компонент смещения."""
        return sla.block_diag(self.H, self.H)


def fractional_norm_dense(L, M, theta: float) -> FractionalNorm:
    """H_θ = M (M^{-1} L)^{1-θ} через обобщённое разложение L X = M X Λ, X^T M X = I."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f'theta must lie in [0, 1], got {theta}')
    L = _dense(L)
    M = _dense(M)
    check_dense_size(L.shape[0], 'fractional norm')

    if theta == 1.0:
        return FractionalNorm(theta=theta, H=M.copy())
    if theta == 0.0:
        return FractionalNorm(theta=theta, H=L.copy())

    w, X = sla.eigh(L, M)
    w = np.clip(w, 0.0, None)
    MX = M @ X
    H = (MX * w ** (1.0 - theta)) @ MX.T
    return FractionalNorm(theta=theta, H=0.5 * (H + H.T))


@dataclass
class PencilFactorization:
    """B-ортонормированный базис V пространства Крылова для B^{-1}A и T = V^T A V.

    B^{-1} A V = V T + beta_next * v_next e_k^T.
    """

    V: np.ndarray = field(repr=False)
    alpha: np.ndarray
    beta: np.ndarray
    beta_next: float = 0.0
    v_next: np.ndarray | None = field(default=None, repr=False)
    breakdown: bool = False

    @property
    def k(self) -> int:
        return self.V.shape[1]

    @property
    def T(self) -> np.ndarray:
        return np.diag(self.alpha) + np.diag(self.beta, 1) + np.diag(self.beta, -1)

    def matrix_function(self, fn) -> np.ndarray:
        """fn(T) через разложение трёхдиагональной T."""
        if self.k == 1:
            return np.array([[fn(np.array([self.alpha[0]]))[0]]])
        w, Q = sla.eigh_tridiagonal(self.alpha, self.beta)
        return (Q * fn(w)) @ Q.T


def generalized_lanczos(A, B, k: int, start: np.ndarray, B_solve=None) -> PencilFactorization:
    """Обобщённый процесс Ланцоша для пучка (A, B) с полной переортогонализацией (дважды)."""
    n = A.shape[0]
    k = max(1, min(int(k), n))
    if B_solve is None:
        if sp.issparse(B):
            B_solve = splu(sp.csc_matrix(B)).solve
        else:
            B_solve = partial(sla.lu_solve, sla.lu_factor(B))

    v = np.asarray(start, dtype=float).copy()
    nrm = math.sqrt(max(float(v @ (B @ v)), 0.0))
    if nrm == 0.0:
        raise ValueError('Lanczos start vector has zero B-norm')
    v /= nrm

    V = np.zeros((n, k))
    BV = np.zeros((n, k))
    alpha = []
    beta = []
    beta_next = 0.0
    v_next = None
    breakdown = False

    for j in range(k):
        V[:, j] = v
        BV[:, j] = B @ v
        Av = A @ v
        a = float(v @ Av)
        alpha.append(a)
        w = B_solve(Av)
        for _ in range(2):
            w -= V[:, : j + 1] @ (BV[:, : j + 1].T @ w)
        b = math.sqrt(max(float(w @ (B @ w)), 0.0))
        if b <= 1e-14 * max(1.0, abs(a)):
            breakdown = j < n - 1
            V = V[:, : j + 1]
            break
        if j < k - 1:
            beta.append(b)
            v = w / b
        else:
            beta_next = b
            v_next = w / b

    if breakdown:
        logger.debug('Lanczos breakdown after %d steps', V.shape[1])
    return PencilFactorization(
        V=V,
        alpha=np.array(alpha),
        beta=np.array(beta),
        beta_next=beta_next,
        v_next=v_next,
        breakdown=breakdown,
    )


def constraint_bordered(top_left: np.ndarray, S12: np.ndarray, S22: np.ndarray, ones=None) -> np.ndarray:
    """[[TL, S12, 0], [S12^T, S22, 1_N], [0, 1_N^T, 0]]."""
    n_g, N = S12.shape
    ones = np.ones(N) if ones is None else np.asarray(ones)
    out = np.zeros((n_g + N + 1, n_g + N + 1))
    out[:n_g, :n_g] = top_left
    out[:n_g, n_g:n_g + N] = S12
    out[n_g:n_g + N, :n_g] = S12.T
    out[n_g:n_g + N, n_g:n_g + N] = S22
    out[n_g:n_g + N, -1] = ones
    out[-1, n_g:n_g + N] = ones
    return out


def _checked_lu(matrix: np.ndarray, what: str):
    lu, piv = sla.lu_factor(matrix, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.size == 0 or d.min() <= np.finfo(float).eps * max(1.0, d.max()) * matrix.shape[0]:
        raise InterfacePreconditionerError(f'{what} is singular')
    return lu, piv


class DenseSchurApprox:
    """S0, S1 и точный S: плотная LU-факторизация матрицы интерфейса."""

    linear = True

    def __init__(self, variant: str, matrix: np.ndarray):
        self.variant = variant
        self.matrix = matrix
        self._lu = _checked_lu(matrix, f'{variant} interface matrix')

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, v, check_finite=False)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


class ConstrainedLanczosFactorization:
    """z_k = W_k T_k^{-1} W_k^T v, W_k = diag(V_x, V_y, U_k).

    core = [[F_x ⊕ F_y, R_k^T], [R_k, D_k]], где F_c -- функция от T_c
    (T^{1-θ} для пучка (L, M), T^θ для обратного пучка (M, L)).
    """

    linear = True

    def __init__(self, bases, cores, S12: np.ndarray, S22: np.ndarray, ones: np.ndarray):
        Vx, Vy = bases
        Fx, Fy = cores
        n_h = Vx.shape[0]
        N = S22.shape[0]
        kx, ky = Vx.shape[1], Vy.shape[1]

        C = np.zeros((N + 1, kx + ky))
        C[:N, :kx] = S12[:n_h].T @ Vx
        C[:N, kx:] = S12[n_h:].T @ Vy
        U, R = sla.qr(C, mode='full')

        F = np.zeros((N + 1, N + 1))
        F[:N, :N] = S22
        F[:N, N] = ones
        F[N, :N] = ones
        D = U.T @ F @ U

        core = np.zeros((kx + ky + N + 1, kx + ky + N + 1))
        core[:kx, :kx] = Fx
        core[kx:kx + ky, kx:kx + ky] = Fy
        core[:kx + ky, kx + ky:] = R.T
        core[kx + ky:, :kx + ky] = R
        core[kx + ky:, kx + ky:] = D

        self.Vx, self.Vy, self.U = Vx, Vy, U
        self.n_h = n_h
        self.core = core
        self._lu = _checked_lu(core, 'constrained Lanczos core matrix')

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        n_h = self.n_h
        kx, ky = self.Vx.shape[1], self.Vy.shape[1]
        w = np.concatenate((self.Vx.T @ v[:n_h], self.Vy.T @ v[n_h:2 * n_h], self.U.T @ v[2 * n_h:]))
        y = sla.lu_solve(self._lu, w, check_finite=False)
        return np.concatenate((self.Vx @ y[:kx], self.Vy @ y[kx:kx + ky], self.U @ y[kx + ky:]))


class LanczosSchurApprox:
    """S2: частичная ограниченная факторизация Ланцоша.

    При каждом применении процесс Ланцоша перезапускается от B^{-1} v_c для каждой
    компоненты смещения, поэтому оператор нелинеен и используется с FGMRES.
    """

    variant = 's2'
    linear = False

    def __init__(self, blocks: SchurBlocks, pencil: InterfacePencil, theta: float, k: int,
                 mode: str = 'inverse'):
        if mode not in LANCZOS_MODES:
            raise ValueError(f'unknown Lanczos mode {mode!r}, expected one of {LANCZOS_MODES}')
        if not 0.0 < theta < 1.0:
            raise ValueError(f'theta must lie in (0, 1), got {theta}')
        self.S12 = blocks.S12
        self.S22 = blocks.S22
        self.ones = blocks.ones
        self.pencil = pencil
        self.theta = theta
        self.k = k
        self.mode = mode
        self.factorizations_built = 0

    @property
    def size(self) -> int:
        return self.S12.shape[0] + self.S12.shape[1] + 1

    def _pencil_pair(self):
        p = self.pencil
        if self.mode == 'inverse':
            return p.M, p.L, p.L_solver.solve, self.theta
        return p.L, p.M, p.M_solver.solve, 1.0 - self.theta

    def _component(self, start: np.ndarray):
        A, B, B_solve, power = self._pencil_pair()
        if not np.any(start):
            start = np.ones(A.shape[0])
        else:
            start = B_solve(start)
        fact = generalized_lanczos(A, B, self.k, start, B_solve=B_solve)
        core = fact.matrix_function(lambda w: np.clip(w, 0.0, None) ** power)
        return fact.V, core

    def factorize(self, start_x: np.ndarray, start_y: np.ndarray) -> ConstrainedLanczosFactorization:
        """Фиксированная (линейная) факторизация для заданных стартовых векторов."""
        Vx, Fx = self._component(start_x)
        Vy, Fy = self._component(start_y)
        self.factorizations_built += 1
        return ConstrainedLanczosFactorization((Vx, Vy), (Fx, Fy), self.S12, self.S22, self.ones)

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        n_h = self.pencil.size
        return self.factorize(v[:n_h], v[n_h:2 * n_h]).apply_inverse(v)


def build_schur_approx(variant: str, blocks: SchurBlocks, pencil: InterfacePencil | None = None,
                       theta: float | None = None, k: int | None = None, *,
                       elastic_schur: np.ndarray | None = None, norm: FractionalNorm | None = None,
                       mode: str = 'inverse'):
    if variant not in VARIANTS:
        raise ValueError(f'unknown preconditioner {variant!r}, expected one of {VARIANTS}')

    theta = default_theta(blocks.N) if theta is None else theta

    if variant == 'exact':
        return DenseSchurApprox('exact', blocks.dense())

    if variant == 's0':
        if elastic_schur is None:
            raise ValueError('s0 requires the elastic Schur complement')
        return DenseSchurApprox('s0', constraint_bordered(elastic_schur, blocks.S12, blocks.S22, blocks.ones))

    if pencil is None:
        raise ValueError(f'{variant} requires the interface pencil')

    if variant == 's1':
        if norm is None or norm.theta != theta:
            norm = fractional_norm_dense(pencil.L, pencil.M, theta)
        return DenseSchurApprox('s1', constraint_bordered(norm.block(), blocks.S12, blocks.S22, blocks.ones))

    k = default_lanczos_k(blocks.n_gamma) if k is None else k
    return LanczosSchurApprox(blocks, pencil, theta, k, mode=mode)


def check_dense_requirements(variant: str, partition: Partition) -> None:
    """Проверяет MAX_DENSE_INTERFACE до начала решения: s0, s1 и exact строят плотные матрицы."""
    n_g = partition.n_gamma
    if variant == 'exact':
        check_dense_size(n_g + partition.N + 1, 'dense Schur complement')
    elif variant == 's0':
        check_dense_size(n_g, 'elastic Schur complement')
    elif variant == 's1':
        check_dense_size(n_g // 2, 'fractional norm')


class SchurApproxBuilder:
    """Собирает S~ на каждом шаге Ньютона; пучок (L_Γ, M_Γ) и H_θ от rho не зависят и кэшируются."""

    def __init__(self, variant: str, partition: Partition, ordering: DofOrdering,
                 theta: float | None = None, k: int | None = None, mode: str = 'inverse'):
        if variant not in VARIANTS:
            raise ValueError(f'unknown preconditioner {variant!r}, expected one of {VARIANTS}')
        if mode not in LANCZOS_MODES:
            raise ValueError(f'unknown Lanczos mode {mode!r}, expected one of {LANCZOS_MODES}')
        check_dense_requirements(variant, partition)
        self.variant = variant
        self.partition = partition
        self.ordering = ordering
        self.theta = default_theta(partition.N) if theta is None else theta
        self.k = default_lanczos_k(partition.n_gamma) if k is None else k
        self.mode = mode
        self.pencil = assemble_interface_pencil(partition) if variant in ('s1', 's2') else None
        self._norm: FractionalNorm | None = None

    def build(self, blocks: SchurBlocks, stiffness=None):
        elastic = None
        if self.variant == 's0':
            if stiffness is None:
                raise ValueError('s0 requires the current stiffness matrix')
            elastic = dense_elastic_schur(stiffness, self.partition, self.ordering)
        if self.variant == 's1' and self._norm is None:
            self._norm = fractional_norm_dense(self.pencil.L, self.pencil.M, self.theta)
        return build_schur_approx(
            self.variant, blocks, self.pencil, self.theta, self.k,
            elastic_schur=elastic, norm=self._norm, mode=self.mode,
        )


@dataclass
class EigPropReport:
    eigenvalues: np.ndarray = field(repr=False)
    unit_count: int
    reduced_eigenvalues: np.ndarray = field(repr=False)
    reduced_mismatch: float
    expected_unit_count: int

    @property
    def holds(self) -> bool:
        return self.unit_count == self.expected_unit_count


def eigprop_check(K, G, D, F, tol: float = 1e-8) -> EigPropReport:
    """Спектр пучка (𝒦, 𝒢) с общими блоками ограничений.

    Ожидается: N+1 собственных значений, равных 1; остальные совпадают со спектром
    (K - Q, G - Q), Q = DZ (Z^T F Z)^{-1} (DZ)^T, Z -- базис ядра 1_N^T.
    """
    K, G, D, F = (np.asarray(a, dtype=float) for a in (K, G, D, F))
    n_g, N = D.shape
    big_k = constraint_bordered(K, D, F)
    big_g = constraint_bordered(G, D, F)
    if np.linalg.cond(big_g) > 1.0 / np.finfo(float).eps:
        raise InterfacePreconditionerError('constraint-bordered matrix G is singular')

    eig = sla.eigvals(big_k, big_g)
    unit_count = int(np.sum(np.abs(eig - 1.0) <= tol))

    Z = sla.null_space(np.ones((1, N)))
    DZ = D @ Z
    Q = DZ @ np.linalg.solve(Z.T @ F @ Z, DZ.T)
    reduced = sla.eigvals(K - Q, G - Q)

    order = np.argsort(np.abs(eig - 1.0))
    rest = eig[order[N + 1:]]
    rest = rest[np.lexsort((rest.imag, rest.real))]
    reduced_sorted = reduced[np.lexsort((reduced.imag, reduced.real))]
    scale = np.maximum(1.0, np.abs(reduced_sorted))
    mismatch = float(np.max(np.abs(rest - reduced_sorted) / scale)) if n_g else 0.0

    return EigPropReport(
        eigenvalues=eig,
        unit_count=unit_count,
        reduced_eigenvalues=reduced,
        reduced_mismatch=mismatch,
        expected_unit_count=N + 1,
    )


def spectral_equivalence_bounds(S_gg: np.ndarray, H: np.ndarray) -> tuple[float, float]:
    """Крайние обобщённые собственные значения (S_ΓΓ, H): c1^2, c2^2."""
    w = sla.eigh(0.5 * (S_gg + S_gg.T), 0.5 * (H + H.T), eigvals_only=True)
    return float(w[0]), float(w[-1])
