import logging

from ..diagnostics import REFERENCE_UNKNOWNS, check_tables, format_outcomes, unknowns_grid
from ..texts import mesh_size_label

logger = logging.getLogger('vts_dd.handlers.tables')


def unknowns_table() -> str:
    grid = unknowns_grid()
    n_values = sorted({N for _, N in grid})
    lines = [f'{"h":<8}' + ''.join(f'{"n(N=" + str(N) + ")":>14}' for N in n_values)]
    for ny in sorted({ny for ny, _ in grid}):
        cells = []
        for N in n_values:
            mark = '*' if REFERENCE_UNKNOWNS.get(ny, (None,))[0] == N else ' '
            cells.append(f'{grid[(ny, N)]:>13}{mark}')
        lines.append(f'{mesh_size_label(ny):<8}' + ''.join(cells))
    lines.append('* -- значение, приведённое в таблице размеров')
    return '\n'.join(lines)


def cmd_check_tables(args) -> int:
    outcomes = check_tables()
    print(format_outcomes(outcomes))
    print()
    print(unknowns_table())
    failed = [o.name for o in outcomes if not o.ok]
    if failed:
        logger.error('Accounting mismatches: %s', ', '.join(failed))
        return 1
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser('check-tables', help='interface and unknown counts per mesh')
    parser.set_defaults(handler=cmd_check_tables)
