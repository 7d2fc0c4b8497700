import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger('vts_dd.mesh')


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class GridMesh:
    """Структурированная сетка консольной балки на [0, 2] x [0, 1].

    Узел (i, j) имеет индекс j*(nx+1) + i, элемент (ix, jy) -- индекс jy*nx + ix.
    Степени свободы перемежаются: 2*node (x), 2*node + 1 (y).
    """

    ny: int
    element_nodes: np.ndarray = field(repr=False)
    node_coords: np.ndarray = field(repr=False)
    dirichlet_nodes: np.ndarray = field(repr=False)
    load_node: int = 0

    @property
    def nx(self) -> int:
        return 2 * self.ny

    @property
    def h(self) -> float:
        return 1.0 / self.ny

    @property
    def node_count(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def element_count(self) -> int:
        return self.nx * self.ny

    @property
    def n_u(self) -> int:
        return 2 * self.node_count

    @property
    def element_dofs(self) -> np.ndarray:
        nodes = self.element_nodes
        return np.stack((2 * nodes, 2 * nodes + 1), axis=2).reshape(len(nodes), 8)

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        d = self.dirichlet_nodes
        return np.column_stack((2 * d, 2 * d + 1)).ravel()

    def node_index(self, i, j):
        return node_index(self.nx, i, j)


def node_index(nx: int, i, j):
    """Номер узла (i, j) при построчной нумерации снизу вверх; i, j могут быть массивами."""
    return j * (nx + 1) + i


def build_mesh(ny: int) -> GridMesh:
    if not isinstance(ny, (int, np.integer)) or isinstance(ny, bool):
        raise MeshError(f'ny must be an integer, got {ny!r}')
    if ny < 2 or ny % 2:
        raise MeshError(f'ny must be a positive even integer >= 2, got {ny}')

    ny = int(ny)
    nx = 2 * ny
    h = 1.0 / ny

    ix, jy = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = node_index(nx, ix, jy).ravel()
    element_nodes = np.column_stack((n0, n0 + 1, n0 + nx + 2, n0 + nx + 1))

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    node_coords = np.column_stack((ii.ravel() * h, jj.ravel() * h))

    dirichlet_nodes = node_index(nx, 0, np.arange(ny + 1))
    load_node = node_index(nx, nx, ny // 2)

    mesh = GridMesh(
        ny=ny,
        element_nodes=element_nodes,
        node_coords=node_coords,
        dirichlet_nodes=dirichlet_nodes,
        load_node=int(load_node),
    )
    logger.debug('mesh ny=%d nx=%d nodes=%d elements=%d', ny, nx, mesh.node_count, mesh.element_count)
    return mesh


@dataclass(frozen=True)
class Partition:
    """Регулярное разбиение на N = p*p прямоугольных подобластей.

    gamma_nodes -- узлы интерфейса без закреплённых; gamma_d -- закреплённые узлы,
    лежащие на линиях интерфейса (хранятся отдельно, в gamma_nodes не входят).
    clamped[k] -- закреплённые узлы, отнесённые к внутренней группе подобласти k.
    """

    mesh: GridMesh
    p: int
    tau: tuple[np.ndarray, ...] = field(repr=False)
    nu: tuple[np.ndarray, ...] = field(repr=False)
    clamped: tuple[np.ndarray, ...] = field(repr=False)
    gamma_nodes: np.ndarray = field(repr=False)
    gamma_d: np.ndarray = field(repr=False)
    element_owner: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.p * self.p

    @property
    def n_gamma(self) -> int:
        return 2 * len(self.gamma_nodes)

    @property
    def m_k(self) -> np.ndarray:
        return np.array([len(t) for t in self.tau])

    @property
    def interface_edges(self) -> np.ndarray:
        """Рёбра сетки, лежащие на линиях интерфейса (пары узлов)."""
        mesh = self.mesh
        nx, ny = mesh.nx, mesh.ny
        ex, ey = nx // self.p, ny // self.p
        edges = []
        for i in range(ex, nx, ex):
            j = np.arange(ny)
            edges.append(np.column_stack((node_index(nx, i, j), node_index(nx, i, j + 1))))
        for j in range(ey, ny, ey):
            i = np.arange(nx)
            edges.append(np.column_stack((node_index(nx, i, j), node_index(nx, i + 1, j))))
        if not edges:
            return np.zeros((0, 2), dtype=int)
        return np.concatenate(edges)


def interface_line_mask(mesh: GridMesh, p: int) -> np.ndarray:
    nx, ny = mesh.nx, mesh.ny
    ex, ey = nx // p, ny // p
    i = np.tile(np.arange(nx + 1), ny + 1)
    j = np.repeat(np.arange(ny + 1), nx + 1)
    on_vertical = (i % ex == 0) & (i > 0) & (i < nx)
    on_horizontal = (j % ey == 0) & (j > 0) & (j < ny)
    return on_vertical | on_horizontal


def build_partition(mesh: GridMesh, p: int) -> Partition:
    if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or p < 1:
        raise MeshError(f'p must be a positive integer, got {p!r}')
    p = int(p)
    if mesh.ny % p or mesh.nx % p:
        raise MeshError(f'p={p} must divide ny={mesh.ny} and nx={mesh.nx}')

    nx, ny = mesh.nx, mesh.ny
    ex, ey = nx // p, ny // p

    ix = np.tile(np.arange(nx), ny)
    jy = np.repeat(np.arange(ny), nx)
    element_owner = (jy // ey) * p + ix // ex

    i = np.tile(np.arange(nx + 1), ny + 1)
    j = np.repeat(np.arange(ny + 1), nx + 1)
    node_owner = np.minimum(j // ey, p - 1) * p + np.minimum(i // ex, p - 1)

    on_line = interface_line_mask(mesh, p)
    dirichlet = np.zeros(mesh.node_count, dtype=bool)
    dirichlet[mesh.dirichlet_nodes] = True

    gamma_nodes = np.flatnonzero(on_line & ~dirichlet)
    gamma_d = np.flatnonzero(on_line & dirichlet)

    N = p * p
    tau = tuple(np.flatnonzero(element_owner == k) for k in range(N))
    nu = tuple(np.flatnonzero((node_owner == k) & ~on_line & ~dirichlet) for k in range(N))
    clamped = tuple(np.flatnonzero((node_owner == k) & dirichlet) for k in range(N))

    partition = Partition(
        mesh=mesh,
        p=p,
        tau=tau,
        nu=nu,
        clamped=clamped,
        gamma_nodes=gamma_nodes,
        gamma_d=gamma_d,
        element_owner=element_owner,
    )
    logger.debug('partition p=%d N=%d n_gamma=%d', p, N, partition.n_gamma)
    return partition


def interface_size_closed_form(ny: int, p: int) -> int:
    nx = 2 * ny
    nodes = (p - 1) * (ny + 1) + (p - 1) * (nx + 1) - (p - 1) ** 2
    return 2 * nodes - 2 * (p - 1)


def total_unknowns(ny: int, N: int) -> int:
    nx = 2 * ny
    return 2 * (nx + 1) * (ny + 1) + 3 * nx * ny + 2 * N + 1


@dataclass(frozen=True)
class UnknownLayout:
    """Естественный порядок неизвестных y = (u, lam, rho, phi, psi, mu, lam0)."""

    n_u: int
    N: int
    m: int

    @property
    def u(self) -> slice:
        return slice(0, self.n_u)

    @property
    def lam(self) -> slice:
        return slice(self.n_u, self.n_u + self.N)

    @property
    def rho(self) -> slice:
        start = self.lam.stop
        return slice(start, start + self.m)

    @property
    def phi(self) -> slice:
        start = self.rho.stop
        return slice(start, start + self.m)

    @property
    def psi(self) -> slice:
        start = self.phi.stop
        return slice(start, start + self.m)

    @property
    def mu(self) -> slice:
        start = self.psi.stop
        return slice(start, start + self.N)

    @property
    def lam0(self) -> int:
        return self.mu.stop

    @property
    def n(self) -> int:
        return self.lam0 + 1

    @classmethod
    def for_partition(cls, partition: Partition) -> 'UnknownLayout':
        mesh = partition.mesh
        return cls(n_u=mesh.n_u, N=partition.N, m=mesh.element_count)


@dataclass(frozen=True)
class DofOrdering:
    """Перестановка: внутренние неизвестные по подобластям, затем (u_Γ, mu, lam0).

    perm[j] -- естественный индекс неизвестной, стоящей на позиции j перестановки.
    """

    layout: UnknownLayout
    perm: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)
    interior_slices: tuple[slice, ...] = field(repr=False)
    interface_u_dofs: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def n_interior(self) -> int:
        return self.interior_slices[-1].stop if self.interior_slices else 0

    @property
    def n_gamma(self) -> int:
        return len(self.interface_u_dofs)

    @property
    def n_interface(self) -> int:
        return self.n - self.n_interior

    @property
    def N(self) -> int:
        return self.layout.N

    def to_permuted(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y)[self.perm]

    def to_natural(self, y_perm: np.ndarray) -> np.ndarray:
        out = np.empty_like(np.asarray(y_perm))
        out[self.perm] = y_perm
        return out


def _interleaved_dofs(nodes: np.ndarray) -> np.ndarray:
    return np.column_stack((2 * nodes, 2 * nodes + 1)).ravel()


def build_permutation(partition: Partition) -> DofOrdering:
    layout = UnknownLayout.for_partition(partition)

    blocks = []
    slices = []
    start = 0
    for k in range(partition.N):
        nodes = np.union1d(partition.nu[k], partition.clamped[k])
        tau_k = partition.tau[k]
        block = np.concatenate((
            _interleaved_dofs(nodes),
            [layout.lam.start + k],
            layout.rho.start + tau_k,
            layout.phi.start + tau_k,
            layout.psi.start + tau_k,
        )).astype(np.int64)
        blocks.append(block)
        slices.append(slice(start, start + len(block)))
        start += len(block)

    gamma = partition.gamma_nodes
    interface_u = np.concatenate((2 * gamma, 2 * gamma + 1)).astype(np.int64)
    blocks.append(interface_u)
    blocks.append(np.arange(layout.mu.start, layout.mu.stop, dtype=np.int64))
    blocks.append(np.array([layout.lam0], dtype=np.int64))

    perm = np.concatenate(blocks)
    if len(perm) != layout.n or len(np.unique(perm)) != layout.n:
        raise RuntimeError(f'permutation is not bijective: size={len(perm)} expected={layout.n}')

    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(layout.n)
    return DofOrdering(
        layout=layout,
        perm=perm,
        inverse=inverse,
        interior_slices=tuple(slices),
        interface_u_dofs=interface_u,
    )
