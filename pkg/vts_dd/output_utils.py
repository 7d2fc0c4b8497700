import csv
import io
import logging
import os
from pathlib import Path

import numpy as np

from .mesh import GridMesh

logger = logging.getLogger('vts_dd.output_utils')

ITERATION_COLUMNS = ('newton_step', 'gmres_iters', 'r', 's', 'residual_norm', 'compliance')


def _atomic_write_text(path: Path, text: str) -> Path:
    """Пишет во временный файл рядом и атомарно заменяет целевой."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    try:
        with open(tmp, 'w', encoding='utf-8', newline='\n') as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError:
        logger.exception('Failed to write %s', path)
        try:
            if tmp.exists():
                tmp.unlink()
        except OSError:
            pass
        raise
    logger.info('Wrote %s', path)
    return path


def write_iterations_csv(steps, path: Path) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(ITERATION_COLUMNS)
    for rec in steps:
        writer.writerow([
            rec.step,
            rec.gmres_iters,
            f'{rec.r:.9e}',
            f'{rec.s:.9e}',
            f'{rec.residual_norm:.9e}',
            f'{rec.compliance:.12e}',
        ])
    return _atomic_write_text(path, buf.getvalue())


def density_grid(rho: np.ndarray, mesh: GridMesh) -> np.ndarray:
    """ny x nx, строка 0 -- верхний ряд элементов."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.element_count,):
        raise ValueError(f'density must have length {mesh.element_count}, got {rho.shape}')
    return rho.reshape(mesh.ny, mesh.nx)[::-1]


def write_density_field(rho: np.ndarray, mesh: GridMesh, path: Path,
                        rho_low: float = 1e-2, rho_up: float = 1.0) -> tuple[Path, Path]:
    """ASCII-сетка плотности (9 значащих цифр) и 8-битный PGM (тёмное = плотное)."""
    grid = density_grid(rho, mesh)
    path = Path(path)
    lines = [' '.join(f'{v:.9g}' for v in row) for row in grid]
    txt_path = _atomic_write_text(path, '\n'.join(lines) + '\n')

    span = rho_up - rho_low
    levels = np.clip(np.rint(255.0 * (rho_up - grid) / span), 0, 255).astype(int)
    header = f'P2\n{mesh.nx} {mesh.ny}\n255\n'
    body = '\n'.join(' '.join(str(v) for v in row) for row in levels)
    pgm_path = _atomic_write_text(path.with_suffix('.pgm'), header + body + '\n')
    return txt_path, pgm_path


def read_density_field(path: Path, mesh: GridMesh | None = None) -> np.ndarray:
    rows = [line.split() for line in Path(path).read_text(encoding='utf-8').splitlines() if line.strip()]
    grid = np.array(rows, dtype=float)
    if mesh is not None and grid.shape != (mesh.ny, mesh.nx):
        raise ValueError(f'density grid has shape {grid.shape}, expected {(mesh.ny, mesh.nx)}')
    return grid[::-1].ravel()


def read_pgm_header(path: Path) -> tuple[str, int, int, int]:
    tokens = Path(path).read_text(encoding='ascii').split()
    return tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])


def write_text(path: Path, text: str) -> Path:
    return _atomic_write_text(path, text)
