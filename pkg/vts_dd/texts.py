from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

STEP_SETUP = 1
STEP_BARRIER = 2
STEP_TERMINAL = 3
STEP_OUTPUT = 4
STEP_DONE = 5

_STEP_LABELS = (
    (STEP_SETUP, 'Сетка, разбиение, начальное приближение'),
    (STEP_BARRIER, 'Барьерные шаги Ньютона'),
    (STEP_TERMINAL, 'Завершающие шаги Ньютона'),
    (STEP_OUTPUT, 'Запись результатов'),
)

PRECOND_TITLES = {'s0': 'S0', 's1': 'S1', 's2': 'S2', 'exact': 'S'}


def mesh_size_label(ny: int) -> str:
    return f'1/{ny}'


def average_gmres(total: int, newton: int) -> Fraction:
    if newton <= 0:
        raise ValueError('newton count must be positive')
    return Fraction(total, newton)


def format_average(avg: Fraction) -> str:
    """Округление до двух знаков (half-up) от точного рационального значения."""
    value = Decimal(avg.numerator) / Decimal(avg.denominator)
    return str(value.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP))


def table_cell(total: int, newton: int) -> str:
    return f'{format_average(average_gmres(total, newton))} ({newton})'


def status_text(
    label: str,
    step: int = 0,
    failed_at: int | None = None,
    error_msg: str | None = None,
) -> str:
    """Текстовый прогресс-статус эксперимента."""
    rows = []
    for s, title in _STEP_LABELS:
        if failed_at == s:
            icon = '❌'
        elif s < step or step >= STEP_DONE:
            icon = '✅'
        elif s == step:
            icon = '🔄'
        else:
            icon = '▫️'
        rows.append(f'{icon} {title}')
    steps_block = '\n'.join(rows)

    if failed_at is not None:
        detail = f'\n{str(error_msg)[:300]}' if error_msg else ''
        header = f'❌ Ошибка при решении{detail}'
    elif step >= STEP_DONE:
        header = '✅ Готово'
    elif step == 0:
        header = '⏳ Подготовка...'
    else:
        header = '🔄 Решение...'
    return f'📐 {label}\n{header}\n\n{steps_block}'


def step_line(rec) -> str:
    return (
        f'  step {rec.step:3d} [{rec.phase:8s}] gmres={rec.gmres_iters:4d} '
        f'r={rec.r:.2e} alpha={rec.alpha:.3f} |R|={rec.residual_after:.3e} '
        f'compliance={rec.compliance:.6g}'
    )


def summary_text(config, result) -> str:
    """Сводка в раскладке таблицы итераций: среднее GMRES на шаг Ньютона (число шагов)."""
    newton = result.newton_count
    total = result.total_gmres
    avg = format_average(average_gmres(total, newton))
    title = PRECOND_TITLES.get(config.precond, config.precond)
    h = mesh_size_label(config.ny)
    cell = table_cell(total, newton)

    lines = [
        '# GMRES (Newton) iterations, cantilever VTS problem',
        f'{"h":<8}{"N":>4}{"theta":>7}  {title}',
        f'{h:<8}{config.N:>4}{config.theta:>7.2f}  {cell}',
        '',
        f'precond = {config.precond}',
        f'lanczos_mode = {config.lanczos_mode}',
        f'load = {config.load:g}',
        f'avg_gmres = {avg}',
        f'total_gmres = {total}',
        f'newton_count = {newton}',
        f'initial_compliance = {result.initial_compliance:.12e}',
        f'final_compliance = {result.compliance_history[-1]:.12e}',
        f'mass_error = {result.mass_error:.3e}',
        f'final_residual = {result.final_residual:.3e}',
    ]
    return '\n'.join(lines) + '\n'
