import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import GridMesh, Partition

logger = logging.getLogger('vts_dd.fem')

# 2x2 Gauss points on [-1, 1]^2, unit weights
GAUSS_POINTS_2X2 = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(3.0)


class AssemblyError(ValueError):
    pass


def plane_stress_matrix(youngs: float, poisson: float) -> np.ndarray:
    c = youngs / (1.0 - poisson ** 2)
    return c * np.array([
        [1.0, poisson, 0.0],
        [poisson, 1.0, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - poisson)],
    ])


def q1_shape_gradients(xi: float, eta: float) -> np.ndarray:
    """dN_i/dxi, dN_i/deta для билинейного четырёхугольника, 2x4."""
    return 0.25 * np.array([
        [-(1.0 - eta), (1.0 - eta), (1.0 + eta), -(1.0 + eta)],
        [-(1.0 - xi), -(1.0 + xi), (1.0 + xi), (1.0 - xi)],
    ])


def strain_displacement(dndx: np.ndarray) -> np.ndarray:
    b = np.zeros((3, 8))
    b[0, 0::2] = dndx[0]
    b[1, 1::2] = dndx[1]
    b[2, 0::2] = dndx[1]
    b[2, 1::2] = dndx[0]
    return b


def element_stiffness(youngs: float, poisson: float, h: float) -> np.ndarray:
    """8x8 матрица жёсткости квадратного Q1-элемента со стороной h (плоское напряжённое состояние)."""
    if youngs <= 0:
        raise AssemblyError(f'youngs modulus must be positive, got {youngs}')
    if not 0.0 <= poisson < 0.5:
        raise AssemblyError(f'poisson ratio must lie in [0, 0.5), got {poisson}')
    if h <= 0:
        raise AssemblyError(f'element size must be positive, got {h}')

    d = plane_stress_matrix(youngs, poisson)
    # x = h/2 (xi + 1): dN/dx = 2/h dN/dxi
    det_j = 0.25 * h * h
    ke = np.zeros((8, 8))
    for xi, eta in GAUSS_POINTS_2X2:
        b = strain_displacement(q1_shape_gradients(xi, eta) * (2.0 / h))
        ke += b.T @ d @ b * det_j
    return 0.5 * (ke + ke.T)


# вертикальная сила в точке (2, 0.5) при E=1
DEFAULT_LOAD = 0.05


@dataclass(frozen=True)
class LoadVector:
    f: np.ndarray
    q: np.ndarray


def assemble_load(mesh: GridMesh, magnitude: float = DEFAULT_LOAD) -> LoadVector:
    f = np.zeros(mesh.n_u)
    f[2 * mesh.load_node + 1] = -magnitude
    q = np.full(mesh.element_count, mesh.h ** 2)
    return LoadVector(f=f, q=q)


class StiffnessAssembly:
    """Сборка A(rho) = sum rho_i A_i и матрицы связи B(u) = [A_1 u, ..., A_m u].

    Строки и столбцы закреплённых степеней свободы заменяются единичными.
    """

    def __init__(self, mesh: GridMesh, youngs: float = 1.0, poisson: float = 0.3):
        self.mesh = mesh
        self.ke = element_stiffness(youngs, poisson, mesh.h)
        self.edof = mesh.element_dofs
        self.n_u = mesh.n_u
        self.m = mesh.element_count

        self.free = np.ones(self.n_u, dtype=bool)
        self.free[mesh.dirichlet_dofs] = False
        self.dirichlet_dofs = mesh.dirichlet_dofs

        rows = np.repeat(self.edof, 8, axis=1).ravel()
        cols = np.tile(self.edof, (1, 8)).ravel()
        keep = self.free[rows] & self.free[cols]
        self._rows = rows[keep]
        self._cols = cols[keep]
        self._keep = keep
        self._free_local = self.free[self.edof].astype(float)

    def assemble_stiffness(self, rho: np.ndarray) -> sp.csr_matrix:
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.m,):
            raise AssemblyError(f'density vector must have length {self.m}, got {rho.shape}')
        if np.any(rho <= 0):
            raise AssemblyError('densities must be strictly positive')

        vals = np.outer(rho, self.ke.ravel()).ravel()[self._keep]
        d = self.dirichlet_dofs
        rows = np.concatenate((self._rows, d))
        cols = np.concatenate((self._cols, d))
        vals = np.concatenate((vals, np.ones(len(d))))
        return sp.coo_matrix((vals, (rows, cols)), shape=(self.n_u, self.n_u)).tocsr()

    def local_displacements(self, u: np.ndarray) -> np.ndarray:
        """Элементные векторы P_f u, m x 8."""
        return (np.asarray(u, dtype=float) * self.free)[self.edof]

    def assemble_B(self, u: np.ndarray) -> sp.csr_matrix:
        ue = self.local_displacements(u)
        local = (ue @ self.ke.T) * self._free_local
        rows = self.edof.ravel()
        cols = np.repeat(np.arange(self.m), 8)
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_u, self.m)).tocsr()

    def element_energies(self, u: np.ndarray) -> np.ndarray:
        """u^T A_i u для каждого элемента, т.е. столбцы B(u)^T u."""
        ue = self.local_displacements(u)
        return np.einsum('ij,jk,ik->i', ue, self.ke, ue)


def segment_pencil(edges: np.ndarray, n: int, h: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """1D P1 матрицы жёсткости L и массы M на графе из отрезков длины h."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m_loc = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
    l_loc = (1.0 / h) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    ne = len(edges)
    mass = sp.coo_matrix((np.tile(m_loc.ravel(), ne), (rows, cols)), shape=(n, n)).tocsr()
    lap = sp.coo_matrix((np.tile(l_loc.ravel(), ne), (rows, cols)), shape=(n, n)).tocsr()
    return lap, mass


@dataclass(frozen=True)
class InterfacePencil:
    """Пара (L_Γ, M_Γ) на одной компоненте смещения, узлы в порядке gamma_nodes."""

    L: sp.csc_matrix = field(repr=False)
    M: sp.csc_matrix = field(repr=False)
    clamped_eliminated: bool = True

    @property
    def size(self) -> int:
        return self.L.shape[0]

    @cached_property
    def L_solver(self):
        return splu(sp.csc_matrix(self.L))

    @cached_property
    def M_solver(self):
        return splu(sp.csc_matrix(self.M))


def assemble_interface_pencil(partition: Partition) -> InterfacePencil:
    gamma = partition.gamma_nodes
    if partition.N == 1 or len(gamma) == 0:
        raise AssemblyError('interface pencil requires a non-empty interface (N > 1)')

    nodes = np.union1d(gamma, partition.gamma_d)
    local = np.full(partition.mesh.node_count, -1, dtype=np.int64)
    local[nodes] = np.arange(len(nodes))

    edges = local[partition.interface_edges]
    lap, mass = segment_pencil(edges, len(nodes), partition.mesh.h)

    keep = local[gamma]
    lap = lap[keep][:, keep]
    mass = mass[keep][:, keep]
    eliminated = len(partition.gamma_d) > 0
    if not eliminated:
        lap = lap + mass

    logger.debug('interface pencil size=%d clamped=%d', len(gamma), len(partition.gamma_d))
    return InterfacePencil(L=sp.csc_matrix(lap), M=sp.csc_matrix(mass), clamped_eliminated=eliminated)
