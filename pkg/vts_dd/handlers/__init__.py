from .props import register as register_props
from .solve import register as register_solve
from .tables import register as register_tables


def register_commands(subparsers) -> None:
    register_solve(subparsers)
    register_tables(subparsers)
    register_props(subparsers)
