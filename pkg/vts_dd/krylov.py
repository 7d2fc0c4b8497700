"""GMRES и гибкий GMRES с правым предобуславливанием, без рестартов.

Критерий остановки: ||b - A x|| <= tol * ||b|| по истинной невязке, которая
проверяется, как только оценка по вращениям Гивенса достигла порога.
Базис Крылова растёт по одному вектору за итерацию; max_iter лишь ограничивает число шагов.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

logger = logging.getLogger('vts_dd.krylov')

Operator = Callable[[np.ndarray], np.ndarray]

# относительный порог "счастливого" обрыва Арнольди
BREAKDOWN_TOL = 1e-14


@dataclass(frozen=True)
class KrylovConfig:
    tol: float = 1e-6
    max_iter: int | None = None
    flexible: bool = False
    reorth_threshold: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f'krylov tolerance must lie in (0, 1), got {self.tol}')
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f'max_iter must be positive, got {self.max_iter}')


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    final_residual: float = 0.0

    def __iter__(self):
        yield self.x
        yield self.iterations
        yield self.residual_history


def _as_operator(op) -> Operator:
    if op is None:
        return lambda v: v
    if callable(op):
        return op
    if hasattr(op, 'dot'):
        return op.dot
    raise TypeError(f'unsupported operator type: {type(op).__name__}')


def _upper_triangle(columns: list[np.ndarray]) -> np.ndarray:
    k = len(columns)
    R = np.zeros((k, k))
    for j, col in enumerate(columns):
        R[: j + 1, j] = col
    return R


def _arnoldi_gmres(apply_A, apply_P_inv, b, config: KrylovConfig, flexible: bool) -> KrylovResult:
    apply_A = _as_operator(apply_A)
    apply_P_inv = _as_operator(apply_P_inv)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return KrylovResult(x=np.zeros(n), iterations=0, residual_history=[0.0], converged=True)

    max_iter = min(config.max_iter or n, n)
    target = config.tol * bnorm

    V = [b / bnorm]
    Z = []
    R_cols = []
    cs = []
    sn = []
    g = [bnorm]
    history = [bnorm]
    x = np.zeros(n)
    true_res = bnorm
    converged = False
    j = -1

    for j in range(max_iter):
        z = apply_P_inv(V[j])
        if flexible:
            Z.append(np.array(z, dtype=float))
        w = np.array(apply_A(z), dtype=float)

        # modified Gram-Schmidt
        h = np.zeros(j + 2)
        for i in range(j + 1):
            hij = V[i] @ w
            h[i] += hij
            w -= hij * V[i]
        hnext = np.linalg.norm(w)

        if hnext > 0.0:
            overlap = max(abs(V[i] @ w) for i in range(j + 1))
            if overlap > config.reorth_threshold * hnext:
                for i in range(j + 1):
                    hij = V[i] @ w
                    h[i] += hij
                    w -= hij * V[i]
                hnext = np.linalg.norm(w)
        h[j + 1] = hnext
        breakdown = hnext <= BREAKDOWN_TOL * np.linalg.norm(h)

        for i in range(j):
            tmp = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
            h[i] = tmp
        denom = np.hypot(h[j], h[j + 1])
        if denom == 0.0:
            cs.append(1.0)
            sn.append(0.0)
        else:
            cs.append(h[j] / denom)
            sn.append(h[j + 1] / denom)
        h[j] = denom
        R_cols.append(h[: j + 1].copy())
        g.append(-sn[j] * g[j])
        g[j] = cs[j] * g[j]
        history.append(abs(g[j + 1]))

        last = j == max_iter - 1
        if abs(g[j + 1]) <= target or breakdown or last:
            y = sla.solve_triangular(_upper_triangle(R_cols), np.asarray(g[: j + 1]))
            if flexible:
                x = np.asarray(Z).T @ y
            else:
                x = apply_P_inv(np.asarray(V[: j + 1]).T @ y)
            true_res = float(np.linalg.norm(b - apply_A(x)))
            if true_res <= target:
                converged = True
                break
            if breakdown or last:
                break
            logger.debug(
                'estimated residual %.3e met but true residual %.3e did not; continuing',
                abs(g[j + 1]), true_res,
            )

        V.append(w / hnext)

    iterations = j + 1
    logger.debug(
        '%s: iterations=%d converged=%s relres=%.3e',
        'fgmres' if flexible else 'gmres', iterations, converged, true_res / bnorm,
    )
    return KrylovResult(
        x=x,
        iterations=iterations,
        residual_history=history,
        converged=converged,
        final_residual=true_res,
    )


def gmres(apply_A, apply_P_inv, b, config: KrylovConfig | None = None) -> KrylovResult:
    """Полный GMRES с правым предобуславливанием; apply_P_inv должен быть линейным."""
    return _arnoldi_gmres(apply_A, apply_P_inv, b, config or KrylovConfig(), flexible=False)


def fgmres(apply_A, apply_P_inv, b, config: KrylovConfig | None = None) -> KrylovResult:
    """Гибкий GMRES: хранит предобусловленные векторы, предобуславливатель может меняться."""
    return _arnoldi_gmres(apply_A, apply_P_inv, b, config or KrylovConfig(flexible=True), flexible=True)


def solve(apply_A, apply_P_inv, b, config: KrylovConfig | None = None) -> KrylovResult:
    config = config or KrylovConfig()
    if config.flexible:
        return fgmres(apply_A, apply_P_inv, b, config)
    return gmres(apply_A, apply_P_inv, b, config)
