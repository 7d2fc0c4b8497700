import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .config import OUTPUT_DIR
from .fem import DEFAULT_LOAD
from .interface import LANCZOS_MODES, VARIANTS, default_theta
from .interior_point import IPConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f'{key}: {message}')


@dataclass(frozen=True)
class ExperimentConfig:
    ny: int = 32
    N: int = 4
    precond: str = 's2'
    theta: float = 0.5
    lanczos_k: int | None = None
    lanczos_mode: str = 'inverse'
    ip: IPConfig = field(default_factory=IPConfig)
    youngs: float = 1.0
    poisson: float = 0.3
    load: float = DEFAULT_LOAD
    diagnostics: bool = False
    out: Path = Path(OUTPUT_DIR)

    @property
    def p(self) -> int:
        return math.isqrt(self.N)


def _int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, f'expected an integer, got {raw!r}') from None


def _float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(key, f'expected a number, got {raw!r}') from None
    if not math.isfinite(value):
        raise ConfigError(key, f'expected a finite number, got {raw!r}')
    return value


def _bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(key, f'expected a boolean, got {raw!r}')


def _choice(key: str, raw: str, options: tuple[str, ...]) -> str:
    value = raw.strip().lower()
    if value not in options:
        raise ConfigError(key, f'expected one of {", ".join(options)}, got {raw!r}')
    return value


_IP_FIELDS = {f.name for f in fields(IPConfig)}

_PARSERS = {
    'ny': _int,
    'N': _int,
    'precond': lambda k, v: _choice(k, v, VARIANTS),
    'theta': _float,
    'lanczos_k': _int,
    'lanczos_mode': lambda k, v: _choice(k, v, LANCZOS_MODES),
    'rho_low': _float,
    'rho_up': _float,
    'volume_fraction': _float,
    'barrier_divisor': _float,
    'barrier_floor': _float,
    'gmres_tol': _float,
    'step_safety': _float,
    'max_outer': _int,
    'max_gmres': _int,
    'terminal_tol': _float,
    'youngs': _float,
    'poisson': _float,
    'load': _float,
    'diagnostics': _bool,
    'out': lambda k, v: Path(v),
}


def _split_lines(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(line, f'line {lineno}: expected key=value')
        key, raw = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError('<empty>', f'line {lineno}: missing key')
        yield key, raw


def parse_config(text: str) -> ExperimentConfig:
    """Разбирает файл вида key=value (по одному на строку, # -- комментарий)."""
    values: dict[str, object] = {}
    for key, raw in _split_lines(text):
        parser = _PARSERS.get(key)
        if parser is None:
            raise ConfigError(key, 'unknown key')
        if key in values:
            raise ConfigError(key, 'duplicate key')
        values[key] = parser(key, raw)

    ny = values.get('ny', 32)
    if ny < 2 or ny % 2:
        raise ConfigError('ny', f'must be a positive even integer, got {ny}')

    N = values.get('N', 4)
    p = math.isqrt(N) if N > 0 else 0
    if N < 1 or p * p != N:
        raise ConfigError('N', f'must be a perfect square, got {N}')
    if ny % p:
        raise ConfigError('N', f'sqrt(N)={p} must divide ny={ny}')

    theta = values.get('theta', default_theta(N))
    if not 0.0 < theta < 1.0:
        raise ConfigError('theta', f'must lie in (0, 1), got {theta}')

    lanczos_k = values.get('lanczos_k')
    if lanczos_k is not None and lanczos_k < 1:
        raise ConfigError('lanczos_k', f'must be positive, got {lanczos_k}')

    youngs = values.get('youngs', 1.0)
    if youngs <= 0:
        raise ConfigError('youngs', f'must be positive, got {youngs}')
    poisson = values.get('poisson', 0.3)
    if not 0.0 <= poisson < 0.5:
        raise ConfigError('poisson', f'must lie in [0, 0.5), got {poisson}')
    load = values.get('load', DEFAULT_LOAD)
    if load <= 0:
        raise ConfigError('load', f'must be positive, got {load}')

    ip = _build_ip_config({k: v for k, v in values.items() if k in _IP_FIELDS})

    return ExperimentConfig(
        ny=ny,
        N=N,
        precond=values.get('precond', 's2'),
        theta=theta,
        lanczos_k=lanczos_k,
        lanczos_mode=values.get('lanczos_mode', 'inverse'),
        ip=ip,
        youngs=youngs,
        poisson=poisson,
        load=load,
        diagnostics=values.get('diagnostics', False),
        out=values.get('out', Path(OUTPUT_DIR)),
    )


def _build_ip_config(values: dict) -> IPConfig:
    defaults = IPConfig()
    merged = {f: values.get(f, getattr(defaults, f)) for f in _IP_FIELDS}

    if merged['rho_low'] <= 0:
        raise ConfigError('rho_low', f'must be positive, got {merged["rho_low"]}')
    if merged['rho_up'] <= merged['rho_low']:
        raise ConfigError('rho_up', f'must exceed rho_low={merged["rho_low"]}, got {merged["rho_up"]}')
    if not merged['rho_low'] < merged['volume_fraction'] < merged['rho_up']:
        raise ConfigError(
            'volume_fraction',
            f'must lie strictly between rho_low and rho_up, got {merged["volume_fraction"]}',
        )
    checks = {
        'barrier_divisor': lambda v: v > 1.0,
        'barrier_floor': lambda v: v > 0.0,
        'gmres_tol': lambda v: 0.0 < v < 1.0,
        'step_safety': lambda v: 0.0 < v < 1.0,
        'max_outer': lambda v: v >= 1,
        'terminal_tol': lambda v: v > 0.0,
        'max_gmres': lambda v: v is None or v >= 1,
    }
    for key, ok in checks.items():
        if not ok(merged[key]):
            raise ConfigError(key, f'invalid value {merged[key]!r}')
    return IPConfig(**merged)


def load_config(path: Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError('config', f'cannot read {path}: {e}') from e
    return parse_config(text)
