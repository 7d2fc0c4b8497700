import tempfile
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from vts_dd.mesh import build_mesh
from vts_dd.output_utils import (
    ITERATION_COLUMNS,
    density_grid,
    read_density_field,
    read_pgm_header,
    write_density_field,
    write_iterations_csv,
)


def test_constant_density_grid():
    mesh = build_mesh(4)
    with tempfile.TemporaryDirectory() as tmp:
        txt, pgm = write_density_field(np.full(mesh.element_count, 0.5), mesh, Path(tmp) / 'density.txt')
        rows = txt.read_text(encoding='utf-8').splitlines()
        assert len(rows) == mesh.ny
        assert all(row.split() == ['0.5'] * mesh.nx for row in rows)
        assert pgm.suffix == '.pgm'


def test_density_grid_top_row_first():
    mesh = build_mesh(2)
    rho = np.arange(mesh.element_count, dtype=float)
    grid = density_grid(rho, mesh)
    assert grid.shape == (mesh.ny, mesh.nx)
    assert np.array_equal(grid[0], rho[mesh.nx:])
    assert np.array_equal(grid[-1], rho[:mesh.nx])


def test_pgm_header_and_levels():
    mesh = build_mesh(2)
    rho = np.full(mesh.element_count, 0.01)
    rho[0] = 1.0
    with tempfile.TemporaryDirectory() as tmp:
        _, pgm = write_density_field(rho, mesh, Path(tmp) / 'd.txt', rho_low=0.01, rho_up=1.0)
        assert read_pgm_header(pgm) == ('P2', mesh.nx, mesh.ny, 255)
        values = [int(v) for v in pgm.read_text(encoding='ascii').split()[4:]]
        assert len(values) == mesh.element_count
        assert values.count(0) == 1
        assert values.count(255) == mesh.element_count - 1
        # элемент 0 -- левый нижний, т.е. первый в последней строке
        assert values[(mesh.ny - 1) * mesh.nx] == 0


def test_density_round_trip_to_printed_precision():
    mesh = build_mesh(4)
    rho = np.random.default_rng(0).uniform(0.01, 1.0, mesh.element_count)
    with tempfile.TemporaryDirectory() as tmp:
        txt, _ = write_density_field(rho, mesh, Path(tmp) / 'density.txt')
        back = read_density_field(txt, mesh)
    assert np.allclose(back, rho, rtol=1e-8, atol=0)


def test_density_length_is_checked():
    mesh = build_mesh(2)
    try:
        density_grid(np.ones(3), mesh)
    except ValueError:
        return
    raise AssertionError('wrong density length should fail')


def test_iterations_csv_columns():
    steps = [
        SimpleNamespace(step=1, gmres_iters=7, r=1.0, s=1.0, residual_norm=0.5, compliance=3.25),
        SimpleNamespace(step=2, gmres_iters=9, r=0.25, s=0.25, residual_norm=0.1, compliance=3.0),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        path = write_iterations_csv(steps, Path(tmp) / 'sub' / 'iterations.csv')
        lines = path.read_text(encoding='utf-8').splitlines()
        assert not (path.parent / 'iterations.csv.tmp').exists()
    assert lines[0] == ','.join(ITERATION_COLUMNS)
    assert len(lines) == 3
    assert lines[1].startswith('1,7,')
    assert lines[2].split(',')[0:2] == ['2', '9']
