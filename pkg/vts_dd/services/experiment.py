import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..experiment_config import ConfigError, ExperimentConfig
from ..fem import AssemblyError
from ..interface import InterfacePreconditionerError, check_dense_requirements
from ..interior_point import (
    InteriorViolationError,
    IPResult,
    OuterIterationLimitError,
    SolverError,
    ip_solve,
)
from ..mesh import build_mesh, build_partition
from ..output_utils import write_density_field, write_iterations_csv, write_text
from ..schur import DenseSizeError, SubdomainFactorizationError
from ..texts import (
    STEP_BARRIER,
    STEP_DONE,
    STEP_OUTPUT,
    STEP_SETUP,
    STEP_TERMINAL,
    status_text,
    step_line,
    summary_text,
)

logger = logging.getLogger('vts_dd.experiment')

# ошибки решения, которые CLI сводит к коду 3
SOLVE_ERRORS = (
    AssemblyError,
    DenseSizeError,
    InteriorViolationError,
    InterfacePreconditionerError,
    SubdomainFactorizationError,
    MemoryError,
)


@dataclass
class ExperimentReport:
    result: IPResult
    out_dir: Path
    files: dict[str, Path] = field(default_factory=dict)


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, out_dir: Path | None = None,
                 echo: Callable[[str], None] | None = None):
        self._config = config
        self._out_dir = Path(out_dir) if out_dir is not None else Path(config.out)
        self._echo = echo or (lambda text: None)

    @property
    def label(self) -> str:
        c = self._config
        return f'ny={c.ny} N={c.N} precond={c.precond} theta={c.theta:g}'

    def run(self) -> ExperimentReport:
        """Полный цикл: сетка -> ip_solve -> iterations.csv, summary.txt, density.{txt,pgm}."""
        config = self._config
        if config.N == 1:
            raise ConfigError('N', 'N=1 has an empty interface; domain decomposition needs N > 1')

        self._status(STEP_SETUP)
        try:
            mesh = build_mesh(config.ny)
            partition = build_partition(mesh, config.p)
            check_dense_requirements(config.precond, partition)
        except SOLVE_ERRORS as e:
            raise self._failure(STEP_SETUP, e) from e
        logger.info(
            'experiment %s: nodes=%d elements=%d n_gamma=%d',
            self.label, mesh.node_count, mesh.element_count, partition.n_gamma,
        )

        phase = {'step': STEP_BARRIER}

        def _on_step(rec):
            current = STEP_TERMINAL if rec.phase == 'terminal' else STEP_BARRIER
            if current != phase['step']:
                phase['step'] = current
                self._status(current)
            self._echo(step_line(rec))

        self._status(STEP_BARRIER)
        try:
            result = ip_solve(
                config.ip, mesh, partition, config.precond,
                theta=config.theta,
                lanczos_k=config.lanczos_k,
                lanczos_mode=config.lanczos_mode,
                youngs=config.youngs,
                poisson=config.poisson,
                load=config.load,
                diagnostics=config.diagnostics,
                on_step=_on_step,
            )
        except OuterIterationLimitError as e:
            logger.exception('Outer iteration limit reached for %s', self.label)
            self._status(0, failed_at=phase['step'], error_msg=str(e))
            self._write_partial(e.result)
            raise
        except SolverError as e:
            logger.exception('Solver failure for %s', self.label)
            self._status(0, failed_at=phase['step'], error_msg=str(e))
            raise
        except SOLVE_ERRORS as e:
            raise self._failure(phase['step'], e) from e

        self._status(STEP_OUTPUT)
        files = self._write_outputs(result, mesh)
        self._status(STEP_DONE)
        return ExperimentReport(result=result, out_dir=self._out_dir, files=files)

    def _failure(self, step: int, error: BaseException) -> SolverError:
        message = f'{type(error).__name__}: {error}'
        logger.error('Solver failure for %s: %s', self.label, message, exc_info=error)
        self._status(0, failed_at=step, error_msg=message)
        return SolverError(message)

    def _write_outputs(self, result: IPResult, mesh) -> dict[str, Path]:
        out = self._out_dir
        ip = self._config.ip
        txt, pgm = write_density_field(
            result.state.rho, mesh, out / 'density.txt', rho_low=ip.rho_low, rho_up=ip.rho_up,
        )
        return {
            'iterations': write_iterations_csv(result.steps, out / 'iterations.csv'),
            'summary': write_text(out / 'summary.txt', summary_text(self._config, result)),
            'density': txt,
            'density_pgm': pgm,
        }

    def _write_partial(self, result: IPResult | None) -> None:
        if result is None or not result.steps:
            return
        try:
            write_iterations_csv(result.steps, self._out_dir / 'iterations.csv')
        except OSError:
            logger.exception('Failed to write partial iteration history')

    def _status(self, step: int, failed_at: int | None = None, error_msg: str | None = None) -> None:
        self._echo(status_text(self.label, step=step, failed_at=failed_at, error_msg=error_msg))


def run_experiment(config: ExperimentConfig, out_dir: Path | None = None,
                   echo: Callable[[str], None] | None = None) -> ExperimentReport:
    return ExperimentRunner(config, out_dir=out_dir, echo=echo).run()
