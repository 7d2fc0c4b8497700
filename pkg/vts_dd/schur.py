import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, splu

from .config import MAX_DENSE_INTERFACE, SUBDOMAIN_WORKERS
from .mesh import DofOrdering, Partition

logger = logging.getLogger('vts_dd.schur')


class SubdomainFactorizationError(RuntimeError):
    def __init__(self, subdomain: int, reason: str = ''):
        self.subdomain = subdomain
        super().__init__(f'factorization of subdomain {subdomain} failed: {reason or "singular block"}')


class DenseSizeError(ValueError):
    pass


def check_dense_size(size: int, what: str, limit: int | None = None) -> None:
    limit = MAX_DENSE_INTERFACE if limit is None else limit
    if size > limit:
        raise DenseSizeError(f'{what}: dense size {size} exceeds limit {limit} (MAX_DENSE_INTERFACE)')


@dataclass
class BlockJacobian:
    """Якобиан в переставленном порядке: J_II (N блоков), J_IΓ, J_ΓI, J_ΓΓ."""

    ordering: DofOrdering
    J_II: tuple[sp.csc_matrix, ...] = field(repr=False)
    J_IG: sp.csr_matrix = field(repr=False)
    J_GI: sp.csc_matrix = field(repr=False)
    J_GG: sp.csr_matrix = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)

    @classmethod
    def from_matrix(cls, J: sp.spmatrix, ordering: DofOrdering) -> 'BlockJacobian':
        J = sp.csr_matrix(J)
        perm = ordering.perm
        Jp = J[perm][:, perm].tocsr()
        ni = ordering.n_interior
        blocks = tuple(sp.csc_matrix(Jp[s, s]) for s in ordering.interior_slices)
        return cls(
            ordering=ordering,
            J_II=blocks,
            J_IG=Jp[:ni, ni:].tocsr(),
            J_GI=Jp[ni:, :ni].tocsc(),
            J_GG=Jp[ni:, ni:].tocsr(),
            matrix=Jp,
        )

    @property
    def n_interface(self) -> int:
        return self.ordering.n_interface

    @property
    def n_gamma(self) -> int:
        return self.ordering.n_gamma

    @property
    def N(self) -> int:
        return self.ordering.N

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


@dataclass
class SubdomainFactorizations:
    jacobian: BlockJacobian
    solvers: list = field(repr=False)

    @property
    def slices(self) -> tuple[slice, ...]:
        return self.jacobian.ordering.interior_slices

    def solve(self, v: np.ndarray) -> np.ndarray:
        return apply_interior_inverse(self, v)


def _worker_count(n_tasks: int, workers: int | None) -> int:
    workers = workers if workers is not None else SUBDOMAIN_WORKERS
    if workers <= 0:
        workers = min(n_tasks, os.cpu_count() or 1)
    return max(1, min(workers, n_tasks))


def factor_interior(J: BlockJacobian, workers: int | None = None) -> SubdomainFactorizations:
    """Независимые LU-разложения блоков J_II^k (SuperLU), по одному на подобласть."""

    def _factor(item):
        k, block = item
        try:
            return splu(block)
        except RuntimeError as e:
            raise SubdomainFactorizationError(k, str(e)) from e

    n_workers = _worker_count(len(J.J_II), workers)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        solvers = list(pool.map(_factor, enumerate(J.J_II)))
    logger.debug('factored %d subdomain blocks with %d workers', len(solvers), n_workers)
    return SubdomainFactorizations(jacobian=J, solvers=solvers)


def apply_interior_inverse(f: SubdomainFactorizations, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for s, solver in zip(f.slices, f.solvers):
        out[s] = solver.solve(np.ascontiguousarray(v[s]))
    return out


def _local_schur_correction(f: SubdomainFactorizations, cols: np.ndarray | None = None) -> np.ndarray:
    """J_ΓI J_II^{-1} J_IΓ[:, cols] в плотном виде, подобласть за подобластью."""
    J = f.jacobian
    n_if = J.n_interface
    cols = np.arange(n_if) if cols is None else np.asarray(cols)
    position = np.full(n_if, -1, dtype=np.int64)
    position[cols] = np.arange(len(cols))

    correction = np.zeros((n_if, len(cols)))
    restricted = J.J_IG[:, cols].tocsr()
    for s, solver in zip(f.slices, f.solvers):
        local = restricted[s]
        nz = np.unique(local.indices)
        if len(nz) == 0:
            continue
        x = solver.solve(local[:, nz].toarray())
        correction[:, nz] += J.J_GI[:, s] @ x
    return correction


@dataclass
class SchurBlocks:
    """S = J_ΓΓ - J_ΓI J_II^{-1} J_IΓ в блочной форме 3x3.

    S11 -- неявный оператор (одно внутреннее решение на применение),
    S12, S22 и столбец ограничения ones -- плотные.
    """

    factorizations: SubdomainFactorizations = field(repr=False)
    S12: np.ndarray = field(repr=False)
    S22: np.ndarray = field(repr=False)
    ones: np.ndarray = field(repr=False)

    @property
    def n_gamma(self) -> int:
        return self.factorizations.jacobian.n_gamma

    @property
    def N(self) -> int:
        return self.factorizations.jacobian.N

    @property
    def S11(self) -> LinearOperator:
        J = self.factorizations.jacobian
        n_g = self.n_gamma
        ni = J.ordering.n_interior
        J_gg = J.J_GG[:n_g, :n_g]
        J_ig = J.J_IG[:, :n_g]
        J_gi = J.J_GI[:n_g, :]

        def _matvec(v):
            v = np.ravel(v)
            w = apply_interior_inverse(self.factorizations, J_ig @ v) if ni else 0.0
            return J_gg @ v - (J_gi @ w if ni else 0.0)

        return LinearOperator((n_g, n_g), matvec=_matvec, dtype=float)

    def dense(self) -> np.ndarray:
        """Полный плотный S (только для небольших интерфейсов)."""
        J = self.factorizations.jacobian
        check_dense_size(J.n_interface, 'dense Schur complement')
        return J.J_GG.toarray() - _local_schur_correction(self.factorizations)

    def dense_S11(self) -> np.ndarray:
        check_dense_size(self.n_gamma, 'dense S11')
        n_g = self.n_gamma
        J = self.factorizations.jacobian
        cols = np.arange(n_g)
        corr = _local_schur_correction(self.factorizations, cols)[:n_g]
        return J.J_GG[:n_g, :n_g].toarray() - corr


def compute_schur_blocks(f: SubdomainFactorizations) -> SchurBlocks:
    J = f.jacobian
    n_g, N = J.n_gamma, J.N
    cols = np.arange(n_g, n_g + N + 1)
    block = J.J_GG[:, cols].toarray() - _local_schur_correction(f, cols)
    return SchurBlocks(
        factorizations=f,
        S12=block[:n_g, :N].copy(),
        S22=block[n_g:n_g + N, :N].copy(),
        ones=block[n_g:n_g + N, N].copy(),
    )


def schur_on_dofs(A: sp.spmatrix, interface_dofs: np.ndarray, interior_groups) -> np.ndarray:
    """A_ΓΓ - A_ΓI A_II^{-1} A_IΓ при блочно-диагональном A_II (группы независимы)."""
    A = sp.csr_matrix(A)
    interface_dofs = np.asarray(interface_dofs)
    check_dense_size(len(interface_dofs), 'elastic Schur complement')
    A_g = A[interface_dofs]
    S = A_g[:, interface_dofs].toarray()
    for dofs in interior_groups:
        dofs = np.asarray(dofs)
        if len(dofs) == 0:
            continue
        A_kg = A[dofs][:, interface_dofs].tocsr()
        nz = np.unique(A_kg.indices)
        if len(nz) == 0:
            continue
        lu = splu(sp.csc_matrix(A[dofs][:, dofs]))
        x = lu.solve(A_kg[:, nz].toarray())
        S[:, nz] -= A_g[:, dofs] @ x
    return 0.5 * (S + S.T)


def dense_elastic_schur(A: sp.spmatrix, partition: Partition, ordering: DofOrdering) -> np.ndarray:
    """Шур-дополнение упругости S_ΓΓ на интерфейсных смещениях (порядок: все x, затем все y)."""
    groups = []
    for k in range(partition.N):
        nodes = np.union1d(partition.nu[k], partition.clamped[k])
        groups.append(np.column_stack((2 * nodes, 2 * nodes + 1)).ravel())
    return schur_on_dofs(A, ordering.interface_u_dofs, groups)


def interface_coupling_ratio(S11: np.ndarray, S_gg: np.ndarray) -> float:
    """||E||_F / ||S_ΓΓ||_F, E = S11 - S_ΓΓ."""
    return float(np.linalg.norm(S11 - S_gg) / np.linalg.norm(S_gg))


def inertia(S: np.ndarray, rel_tol: float = 1e-12) -> tuple[int, int, int]:
    """(отрицательные, нулевые, положительные) собственные значения симметричной части."""
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    tol = rel_tol * max(1.0, float(np.max(np.abs(w)))) if len(w) else 0.0
    return int(np.sum(w < -tol)), int(np.sum(np.abs(w) <= tol)), int(np.sum(w > tol))


class BlockTriangularPreconditioner:
    """Правый предобуславливатель P = [[J_II, J_IΓ], [0, S~]].

    P^{-1} v: z_Γ = S~^{-1} v_Γ, затем z_I = J_II^{-1}(v_I - J_IΓ z_Γ).
    """

    def __init__(self, factorizations: SubdomainFactorizations, schur_approx):
        self.factorizations = factorizations
        self.schur_approx = schur_approx
        self.jacobian = factorizations.jacobian
        self.applications = 0

    @property
    def linear(self) -> bool:
        return getattr(self.schur_approx, 'linear', True)

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        self.applications += 1
        ni = self.jacobian.ordering.n_interior
        v = np.asarray(v, dtype=float)
        z_g = self.schur_approx.apply_inverse(v[ni:])
        z_i = apply_interior_inverse(self.factorizations, v[:ni] - self.jacobian.J_IG @ z_g)
        return np.concatenate((z_i, z_g))

    def matvec(self, z: np.ndarray) -> np.ndarray:
        J = self.jacobian
        ni = J.ordering.n_interior
        z = np.asarray(z, dtype=float)
        top = np.empty(ni)
        for s, block in zip(J.ordering.interior_slices, J.J_II):
            top[s] = block @ z[s]
        top += J.J_IG @ z[ni:]
        return np.concatenate((top, self.schur_approx.matvec(z[ni:])))


def apply_P_inverse(f: SubdomainFactorizations, schur_approx, v: np.ndarray) -> np.ndarray:
    return BlockTriangularPreconditioner(f, schur_approx).apply_inverse(v)
