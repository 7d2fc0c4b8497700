import argparse
import logging

from .config import DEBUG_MODE, LOG_FILE, LOG_LEVEL, LOG_TO_FILE
from .handlers import register_commands

logger = logging.getLogger('vts_dd')


def setup_logging() -> None:
    numeric_level = getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    if DEBUG_MODE:
        numeric_level = logging.DEBUG
    handlers = [logging.StreamHandler()]
    if LOG_TO_FILE:
        try:
            fh = logging.FileHandler(LOG_FILE, encoding='utf-8')
            handlers.append(fh)
        except Exception:
            pass
    logging.basicConfig(
        level=numeric_level,
        handlers=handlers,
        format='%(asctime)s %(levelname)s [%(name)s] %(message)s',
    )
    logger.setLevel(numeric_level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='vts_dd',
        description='VTS topology optimization with a domain-decomposition Newton-Krylov solver',
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    register_commands(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Точка входа CLI: 0 -- успех, 2 -- ошибка конфигурации, 3 -- сбой решателя."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse: --help -> 0, ошибка аргументов -> 2
        return int(e.code or 0)

    setup_logging()
    return args.handler(args)
