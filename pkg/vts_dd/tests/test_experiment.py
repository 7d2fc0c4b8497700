import tempfile
from pathlib import Path

from vts_dd import cli, schur
from vts_dd.config import SLOW_TESTS
from vts_dd.experiment_config import ConfigError, parse_config
from vts_dd.fem import AssemblyError
from vts_dd.handlers import solve as solve_handler
from vts_dd.interior_point import InteriorViolationError, OuterIterationLimitError, SolverError
from vts_dd.output_utils import ITERATION_COLUMNS
from vts_dd.schur import DenseSizeError
from vts_dd.services import experiment
from vts_dd.services.experiment import ExperimentRunner, run_experiment


def _run_allowing_limit(config, out_dir):
    try:
        return run_experiment(config, out_dir=out_dir)
    except OuterIterationLimitError:
        return None


def test_single_subdomain_rejected_before_solve():
    config = parse_config('ny=4\nN=1')
    with tempfile.TemporaryDirectory() as tmp:
        try:
            run_experiment(config, out_dir=Path(tmp))
        except ConfigError as e:
            assert e.key == 'N'
            assert not any(Path(tmp).iterdir())
            return
    raise AssertionError('N=1 must be rejected')


def test_run_experiment_writes_reports():
    config = parse_config('ny=4\nN=4\nprecond=exact\nmax_outer=40')
    echoed = []
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / 'run'
        try:
            report = ExperimentRunner(config, out_dir=out, echo=echoed.append).run()
        except OuterIterationLimitError:
            header = (out / 'iterations.csv').read_text(encoding='utf-8').splitlines()[0]
            assert header == ','.join(ITERATION_COLUMNS)
            return
        assert set(report.files) == {'iterations', 'summary', 'density', 'density_pgm'}
        assert all(path.exists() for path in report.files.values())
        summary = report.files['summary'].read_text(encoding='utf-8')
        assert f'newton_count = {report.result.newton_count}' in summary
        assert f'total_gmres = {report.result.total_gmres}' in summary
        rows = report.files['iterations'].read_text(encoding='utf-8').splitlines()
        assert len(rows) == report.result.newton_count + 1
    assert any('✅ Готово' in text for text in echoed)


def test_identical_configs_give_identical_files():
    config = parse_config('ny=4\nN=4\nprecond=s1\nmax_outer=12')
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / 'a', Path(tmp) / 'b'
        _run_allowing_limit(config, a)
        _run_allowing_limit(config, b)
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        assert 'iterations.csv' in names
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_solver_failure_status_is_echoed():
    original = experiment.ip_solve

    def _fail(*args, **kwargs):
        raise SolverError('subdomain 2 singular')

    echoed = []
    experiment.ip_solve = _fail
    try:
        runner = ExperimentRunner(parse_config('ny=4\nN=4'), out_dir=Path('unused'), echo=echoed.append)
        try:
            runner.run()
        except SolverError:
            pass
        else:
            raise AssertionError('SolverError must propagate')
    finally:
        experiment.ip_solve = original
    assert '❌ Ошибка при решении' in echoed[-1]
    assert 'subdomain 2 singular' in echoed[-1]


def test_solve_time_errors_become_solver_failures():
    original = experiment.ip_solve
    errors = (
        InteriorViolationError('density left the open interval'),
        AssemblyError('interface pencil requires a non-empty interface'),
        MemoryError(),
    )
    try:
        for error in errors:
            def _fail(*args, error=error, **kwargs):
                raise error

            experiment.ip_solve = _fail
            echoed = []
            runner = ExperimentRunner(parse_config('ny=4\nN=4'), out_dir=Path('unused'), echo=echoed.append)
            try:
                runner.run()
            except SolverError as e:
                assert e.__cause__ is error
                assert type(error).__name__ in str(e)
            else:
                raise AssertionError(f'{type(error).__name__} must become SolverError')
            assert '❌ Ошибка при решении' in echoed[-1]
            assert type(error).__name__ in echoed[-1]
    finally:
        experiment.ip_solve = original


def test_dense_size_limit_is_checked_before_solve():
    original = schur.MAX_DENSE_INTERFACE
    schur.MAX_DENSE_INTERFACE = 10
    echoed = []
    try:
        runner = ExperimentRunner(
            parse_config('ny=8\nN=4\nprecond=s0'), out_dir=Path('unused'), echo=echoed.append,
        )
        try:
            runner.run()
        except SolverError as e:
            assert isinstance(e.__cause__, DenseSizeError)
        else:
            raise AssertionError('dense size guard must stop the run')
    finally:
        schur.MAX_DENSE_INTERFACE = original
    assert not any('step ' in line for line in echoed)
    assert '❌ Сетка, разбиение, начальное приближение' in echoed[-1]


def test_cli_dense_size_limit_exit_code():
    original = schur.MAX_DENSE_INTERFACE
    schur.MAX_DENSE_INTERFACE = 10
    try:
        with tempfile.TemporaryDirectory() as tmp:
            cfg = Path(tmp) / 's0.cfg'
            cfg.write_text('ny=8\nN=4\nprecond=s0\n', encoding='utf-8')
            out = Path(tmp) / 'out'
            assert cli.main(['solve', str(cfg), '--out', str(out)]) == 3
            assert not out.exists()
    finally:
        schur.MAX_DENSE_INTERFACE = original


def test_cli_config_error_exit_code():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / 'bad.cfg'
        cfg.write_text('N=5\n', encoding='utf-8')
        assert cli.main(['solve', str(cfg)]) == 2
        assert cli.main(['solve', str(Path(tmp) / 'missing.cfg')]) == 2


def test_cli_argument_errors_exit_code():
    assert cli.main([]) == 2
    assert cli.main(['frobnicate']) == 2


def test_cli_solver_failure_exit_code():
    original = solve_handler.run_experiment

    def _fail(config, echo=None):
        raise SolverError('stalled')

    solve_handler.run_experiment = _fail
    try:
        with tempfile.TemporaryDirectory() as tmp:
            cfg = Path(tmp) / 'ok.cfg'
            cfg.write_text('ny=4\nN=4\n', encoding='utf-8')
            assert cli.main(['solve', str(cfg), '--out', tmp]) == 3
    finally:
        solve_handler.run_experiment = original


def test_cli_out_overrides_config():
    seen = {}
    original = solve_handler.run_experiment

    def _capture(config, echo=None):
        seen['out'] = config.out
        raise OSError('disk full')

    solve_handler.run_experiment = _capture
    try:
        with tempfile.TemporaryDirectory() as tmp:
            cfg = Path(tmp) / 'ok.cfg'
            cfg.write_text('ny=4\nN=4\nout=elsewhere\n', encoding='utf-8')
            assert cli.main(['solve', str(cfg), '--out', str(Path(tmp) / 'here')]) == 3
            assert seen['out'] == Path(tmp) / 'here'
    finally:
        solve_handler.run_experiment = original


def test_cli_check_tables():
    assert cli.main(['check-tables']) == 0


def test_cli_props_unknown_filter():
    assert cli.main(['props', '--only', 'no such property']) == 1


def test_reference_s0_run():
    if not SLOW_TESTS:
        return
    config = parse_config('ny=64\nN=4\nprecond=s0')
    with tempfile.TemporaryDirectory() as tmp:
        report = run_experiment(config, out_dir=Path(tmp))
        result = report.result
        assert result.converged
        assert 8 <= result.newton_count <= 30
        assert result.total_gmres / result.newton_count <= 20
        summary = report.files['summary'].read_text(encoding='utf-8')
        assert 'avg_gmres = ' in summary
