import logging
from dataclasses import replace
from pathlib import Path

from ..experiment_config import ConfigError, load_config
from ..services.experiment import run_experiment

logger = logging.getLogger('vts_dd.handlers.solve')

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_FAILURE = 3


def cmd_solve(args) -> int:
    logger.info('cmd_solve: config=%s out=%s', args.config, args.out)
    try:
        config = load_config(args.config)
        if args.out is not None:
            config = replace(config, out=Path(args.out))
    except ConfigError as e:
        logger.error('Invalid configuration: %s', e)
        print(f'❌ {e}')
        return EXIT_CONFIG_ERROR

    try:
        report = run_experiment(config, echo=print)
    except ConfigError as e:
        logger.error('Invalid configuration: %s', e)
        print(f'❌ {e}')
        return EXIT_CONFIG_ERROR
    except (RuntimeError, OSError, MemoryError):
        logger.exception('Solve failed for %s', args.config)
        return EXIT_SOLVER_FAILURE

    for name, path in report.files.items():
        print(f'  {name}: {path}')
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser('solve', help='run one experiment from a key=value config file')
    parser.add_argument('config', type=Path, help='key=value experiment file')
    parser.add_argument('--out', type=Path, default=None, help='output directory (overrides out=)')
    parser.set_defaults(handler=cmd_solve)
