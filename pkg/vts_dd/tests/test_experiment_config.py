import tempfile
from pathlib import Path

from vts_dd.experiment_config import ConfigError, ExperimentConfig, load_config, parse_config
from vts_dd.fem import DEFAULT_LOAD


def _config_error(text):
    try:
        parse_config(text)
    except ConfigError as e:
        return e
    raise AssertionError(f'{text!r} should be rejected')


def test_empty_input_gives_defaults():
    config = parse_config('')
    assert config == ExperimentConfig()
    assert (config.ny, config.N, config.precond) == (32, 4, 's2')
    assert config.theta == 0.5
    assert config.lanczos_k is None
    assert config.load == DEFAULT_LOAD


def test_theta_defaults_from_subdomain_count():
    config = parse_config('ny=64\nN=4\nprecond=s0')
    assert config.precond == 's0'
    assert config.theta == 0.5
    assert parse_config('ny=64\nN=16').theta == 0.6
    assert parse_config('ny=64\nN=64').theta == 0.7
    assert parse_config('ny=64\nN=16\ntheta=0.55').theta == 0.55


def test_comments_blank_lines_and_ip_keys():
    text = '''
    # эксперимент
    ny = 16   # сетка
    N = 4
    precond = S1
    rho_low = 0.001
    max_outer = 80
    max_gmres = 200
    diagnostics = yes
    lanczos_mode = direct
    load = 0.1
    out = runs/a
    '''
    config = parse_config(text)
    assert config.ny == 16
    assert config.precond == 's1'
    assert config.ip.rho_low == 0.001
    assert config.ip.max_outer == 80
    assert config.ip.max_gmres == 200
    assert config.diagnostics is True
    assert config.lanczos_mode == 'direct'
    assert config.out == Path('runs/a')
    assert config.load == 0.1
    assert config.p == 2


def test_errors_name_the_key():
    cases = {
        'N=5': 'N',
        'ny=7': 'ny',
        'ny=6\nN=16': 'N',
        'theta=1.0': 'theta',
        'precond=s3': 'precond',
        'lanczos_k=0': 'lanczos_k',
        'poisson=0.5': 'poisson',
        'youngs=-1': 'youngs',
        'load=0': 'load',
        'rho_up=0.005': 'rho_up',
        'volume_fraction=1.0': 'volume_fraction',
        'gmres_tol=2': 'gmres_tol',
        'max_outer=abc': 'max_outer',
        'colour=red': 'colour',
        'diagnostics=maybe': 'diagnostics',
    }
    for text, key in cases.items():
        e = _config_error(text)
        assert e.key == key, (text, e.key)
        assert str(e).startswith(f'{key}: ')


def test_duplicate_and_malformed_lines():
    assert 'duplicate' in str(_config_error('ny=8\nny=16'))
    assert 'key=value' in str(_config_error('ny 8'))


def test_single_subdomain_is_a_valid_config():
    config = parse_config('ny=8\nN=1')
    assert config.N == 1


def test_load_config_reads_file_and_reports_missing():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'exp.cfg'
        path.write_text('ny=8\nN=4\nprecond=exact\n', encoding='utf-8')
        assert load_config(path).precond == 'exact'

        try:
            load_config(Path(tmp) / 'missing.cfg')
        except ConfigError as e:
            assert e.key == 'config'
            return
    raise AssertionError('missing file should raise ConfigError')
