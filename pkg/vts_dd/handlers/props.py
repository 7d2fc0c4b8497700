import logging

from ..diagnostics import format_outcomes, run_properties

logger = logging.getLogger('vts_dd.handlers.props')


def cmd_props(args) -> int:
    outcomes = run_properties(args.only)
    if not outcomes:
        print(f'no property matches {args.only!r}')
        return 1
    print(format_outcomes(outcomes))
    failed = [o.name for o in outcomes if not o.ok]
    if failed:
        logger.error('Property checks failed: %s', ', '.join(failed))
        return 1
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser('props', help='run the numerical property suite')
    parser.add_argument('--only', default=None, help='substring filter on property names')
    parser.set_defaults(handler=cmd_props)
