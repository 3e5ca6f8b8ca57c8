"""
Command-line surface: `selection-lab <command>`.

Exit codes: 0 when every verdict passes (or none were requested), 1 when
any verdict fails, 2 on usage or configuration errors.
"""
import itertools
import logging
import math
import sys
from typing import Any, Dict, List, Optional

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from selection_lab.bipartite_online import g_bipartite, kesselheim_bound
from selection_lab.config import _settings
from selection_lab.errors import InvariantViolation, SelectionLabError
from selection_lab.graphic_online import g_graphic
from selection_lab.harness.figures import FIGURES, figure_csv
from selection_lab.harness.models import ExperimentConfig, read_config
from selection_lab.harness.problems import random_unit_demand_instance
from selection_lab.harness.report import compare_all, emit_csv, write_csv
from selection_lab.harness.runner import run_experiment
from selection_lab.instances import ArrivalOrder, ErrorModel, WeightDistribution, make_predictions, sample_arrival_order
from selection_lab.numerics import f_of_c, graphic_bound_f, phase_fractions
from selection_lab.offline_oracles import max_weight_matching
from selection_lab.secretary import SecretaryParams, g_secretary
from selection_lab.truthful import MechanismParams, allocation_profile, audit_truthfulness, is_monotone_profile
from selection_lab.utils import trial_rng

logger = logging.getLogger(__name__)

err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

AUDIT_ALL_ORDERS_UP_TO = 5


def experiment_options(f):
    """Flags shared by the per-problem commands."""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='TOML experiment config.'),
        click.option('--algorithm', help='Algorithm variant of the problem.'),
        click.option('--seed', type=click.IntRange(0, 2**64 - 1), help='Master seed.'),
        click.option('--trials', type=click.IntRange(min=1), help='Trials per cell.'),
        click.option('--out', type=click.Path(dir_okay=False), help='CSV output path (stdout if omitted).'),
        click.option('--slack', type=click.FloatRange(min=0.0), help='Finite-n slack for the verdicts.'),
        click.option('--c', 'c', type=float, multiple=True, help='Phase parameter c (repeatable).'),
        click.option('--d', 'd', type=float, multiple=True, help='Phase parameter d (repeatable).'),
        click.option('--lambda', 'lambda_scale', type=float, multiple=True,
                     help='Confidence lambda as a fraction of the reference value (repeatable).'),
        click.option('--eta', 'eta_scale', type=float, multiple=True,
                     help='Prediction error eta as a fraction of the reference value (repeatable).'),
        click.option('--n', type=click.IntRange(min=1), help='Online side size.'),
        click.option('--m', type=click.IntRange(min=1), help='Right side size.'),
        click.option('--error-kind', type=click.Choice(['exact', 'constant_shift', 'uniform_noise', 'adversarial_sign'])),
        click.option('--instances', 'instances_per_cell', type=click.IntRange(min=1), help='Instances per cell.'),
        click.option('--workers', type=click.IntRange(min=1), help='Worker threads.'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def build_config(problem: Optional[str], config_path: Optional[str], flags: Dict[str, Any]) -> ExperimentConfig:
    raw: Dict[str, Any] = read_config(config_path) if config_path else {}
    if problem is not None:
        if raw.get('problem', problem) != problem:
            raise click.UsageError(f"config describes {raw['problem']!r}, not {problem!r}")
        raw['problem'] = problem

    generator = dict(raw.get('generator', {}))
    for key in ('n', 'm'):
        if flags.get(key) is not None:
            generator[key] = flags[key]
    if generator:
        raw['generator'] = generator

    for key in ('algorithm', 'trials', 'slack', 'error_kind', 'instances_per_cell', 'seed'):
        if flags.get(key) is not None:
            raw[key] = flags[key]
    for key in ('c', 'd', 'lambda_scale', 'eta_scale'):
        if flags.get(key):
            raw[key] = list(flags[key])
    if flags.get('out'):
        raw['output'] = flags['out']

    raw['seed'] = _settings.resolve_seed(raw.get('seed', 0))
    return ExperimentConfig.model_validate(raw)


def verdict_table(verdicts) -> Table:
    table = Table(title='Empirical ratio against the guaranteed bound')
    for column in ('cell', 'c', 'd', 'lambda', 'eta', 'mean', 'stderr', 'bound', 'margin', 'verdict'):
        table.add_column(column, justify='right')
    for i, v in enumerate(verdicts):
        b = v.batch
        style = 'green' if v.passed else 'bold red'
        table.add_row(str(i), f'{b.c:g}', f'{b.d:g}', f'{b.lam:g}', f'{b.eta:g}', f'{b.mean_ratio:.4f}',
                      f'{b.stderr:.4f}', f'{b.bound:.4f}', f'{v.margin:+.4f}', f'[{style}]{v.label}[/{style}]')
    return table


def execute(ctx: click.Context, config: ExperimentConfig, workers: Optional[int]):
    try:
        result = run_experiment(config, workers=workers)
    except InvariantViolation as e:
        logger.error(f"Invariant violated during the run: {e}", exc_info=True)
        err_console.print(f"[bold red]invariant violated[/bold red]: {e}")
        ctx.exit(EXIT_FAIL)
    except SelectionLabError as e:
        logger.error(f"Experiment failed: {e}")
        err_console.print(f"[red]{e}[/red]")
        ctx.exit(EXIT_USAGE)
    for skipped in result.skipped:
        err_console.print(f"[yellow]skipped cell {skipped.index}[/yellow]: {skipped.reason}")
    if not result.batches:
        err_console.print('[red]no cell could be run[/red]')
        ctx.exit(EXIT_USAGE)

    if config.output:
        try:
            write_csv(result.batches, config.output)
        except SelectionLabError as e:
            err_console.print(f"[red]{e}[/red]")
            ctx.exit(EXIT_USAGE)
    else:
        click.echo(emit_csv(result.batches), nl=False)

    verdicts = compare_all(result.batches, config.slack)
    err_console.print(verdict_table(verdicts))
    ctx.exit(EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAIL)


def run_problem(ctx: click.Context, problem: Optional[str], flags: Dict[str, Any]):
    try:
        config = build_config(problem, flags.pop('config_path', None), flags)
    except (ValidationError, SelectionLabError) as e:
        err_console.print(f'[red]invalid configuration[/red]: {e}')
        ctx.exit(EXIT_USAGE)
    execute(ctx, config, flags.get('workers'))


@click.group()
@click.option('--log-level', default=None, help='Overrides SELECTION_LAB_LOG_LEVEL.')
def cli(log_level):
    """Online selection with predictions: experiments and bound evaluators."""
    level = (log_level or _settings.LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr, force=True)


@cli.command()
@experiment_options
@click.pass_context
def secretary(ctx, **flags):
    """Single-choice secretary with a predicted maximum."""
    run_problem(ctx, 'secretary', flags)


@cli.command()
@experiment_options
@click.pass_context
def bipartite(ctx, **flags):
    """Online bipartite matching with predicted per-node values."""
    run_problem(ctx, 'bipartite', flags)


@cli.command()
@experiment_options
@click.pass_context
def graphic(ctx, **flags):
    """Graphic matroid secretary with predicted per-vertex maxima."""
    run_problem(ctx, 'graphic', flags)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False))
@click.option('--seed', type=click.IntRange(0, 2**64 - 1))
@click.option('--trials', type=click.IntRange(min=1))
@click.option('--out', type=click.Path(dir_okay=False))
@click.option('--slack', type=click.FloatRange(min=0.0))
@click.option('--workers', type=click.IntRange(min=1))
@click.pass_context
def sweep(ctx, **flags):
    """Run the grid described by a config file (any problem)."""
    run_problem(ctx, None, flags)


@cli.command('truthful-audit')
@click.option('--n', default=3, type=click.IntRange(min=1), help='Agents per instance.')
@click.option('--m', default=3, type=click.IntRange(min=1), help='Items per instance.')
@click.option('--instances', default=20, type=click.IntRange(min=1))
@click.option('--max-value', default=20, type=click.IntRange(min=0))
@click.option('--density', default=0.6, type=click.FloatRange(0.0, 1.0, min_open=True))
@click.option('--c', default=3.0, type=float)
@click.option('--d', default=1.5, type=float)
@click.option('--lambda', 'lam', default=1, type=click.IntRange(min=0))
@click.option('--eta', default=0, type=click.IntRange(min=0))
@click.option('--margin', default=2, type=click.IntRange(min=0))
@click.option('--orders', default=24, type=click.IntRange(min=1),
              help=f'Sampled orders per instance when n > {AUDIT_ALL_ORDERS_UP_TO}.')
@click.option('--seed', default=0, type=click.IntRange(0, 2**64 - 1))
@click.pass_context
def truthful_audit(ctx, n, m, instances, max_value, density, c, d, lam, eta, margin, orders, seed):
    """Check that no agent gains by misreporting, over random unit-demand instances."""
    seed = _settings.resolve_seed(seed)
    weights = WeightDistribution(kind='integer', low=0, high=max_value)
    violations = 0
    non_monotone = 0
    runs = 0

    for k in range(instances):
        rng = trial_rng(seed, k)
        instance = random_unit_demand_instance(n, m, rng, weights, density)
        graph = instance.to_bipartite(instance.values)
        predictions = make_predictions(graph, ErrorModel(kind='uniform_noise' if eta else 'exact', magnitude=eta,
                                                         seed=int(rng.integers(2**63)), integer=True),
                                       max_weight_matching(graph))
        try:
            params = MechanismParams(c=c, d=d, lam=min(lam, int(predictions.min_value())), predictions=predictions)
        except ValidationError as e:
            err_console.print(f'[red]invalid mechanism parameters[/red]: {e}')
            ctx.exit(EXIT_USAGE)

        if n <= AUDIT_ALL_ORDERS_UP_TO:
            order_list = [ArrivalOrder(ids=p) for p in itertools.permutations(range(1, n + 1))]
        else:
            order_list = [sample_arrival_order(n, rng) for _ in range(orders)]

        top = max(instance.values, default=0) + margin
        for order in order_list:
            audit = audit_truthfulness(instance, order, params, max_report=top)
            runs += audit.runs
            violations += len(audit.violations)
            for agent in range(1, n + 1):
                if not is_monotone_profile(allocation_profile(instance, order, params, agent, top)):
                    non_monotone += 1

    table = Table(title='Truthfulness audit')
    for column in ('instances', 'mechanism runs', 'profitable deviations', 'non-monotone allocations'):
        table.add_column(column, justify='right')
    table.add_row(str(instances), str(runs), str(violations), str(non_monotone))
    err_console.print(table)
    click.echo(f'violations={violations} non_monotone={non_monotone}')
    ctx.exit(EXIT_OK if violations == 0 and non_monotone == 0 else EXIT_FAIL)


@cli.command()
@click.option('--c', default=math.e, type=float)
@click.option('--d', default=1.0, type=float)
@click.option('--lambda', 'lam', default=0.0, type=float, help='Absolute confidence parameter.')
@click.option('--eta', default=0.0, type=float, help='Absolute prediction error.')
@click.option('--opt', default=1.0, type=float, help='Offline optimum the bounds refer to.')
@click.option('--n', type=click.IntRange(min=1), help='Instance size for finite-n bounds.')
@click.option('--psi', default=1, type=click.IntRange(min=0), help='Cardinality of an optimal matching.')
@click.option('--vertices', default=1, type=click.IntRange(min=1), help='Vertex count for the graphic bound.')
@click.option('--figure', type=click.Choice(FIGURES), help='Emit the CSV sweep behind a figure instead.')
@click.option('--points', default=50, type=click.IntRange(min=2))
@click.pass_context
def bounds(ctx, c, d, lam, eta, opt, n, psi, vertices, figure, points):
    """Evaluate phase fractions, f(c) and the guaranteed ratios."""
    if figure:
        click.echo(figure_csv(figure, points), nl=False)
        ctx.exit(EXIT_OK)

    try:
        fractions = phase_fractions(c)
        lines: List[str] = [
            f'phase_low={fractions.low!r}',
            f'phase_high={fractions.high!r}',
            f'f_c={f_of_c(c)!r}',
        ]
        if lam <= opt:
            lines.append(f'g_secretary={g_secretary(eta, SecretaryParams(c=c, lam=lam, p_star=opt), opt)!r}')
        if c > d:
            lines.append(f'g_bipartite={g_bipartite(eta, c, d, lam, opt, psi)!r}')
            lines.append(f'g_graphic={g_graphic(eta, c, d, lam, opt, vertices)!r}')
        if n is not None:
            lines.append(f'kesselheim_bound={kesselheim_bound(c, d, n)!r}')
            if c > 1 and math.floor(n / c) >= 2:
                lines.append(f'graphic_bound_f={graphic_bound_f(c, n)!r}')
    except (SelectionLabError, ValidationError) as e:
        err_console.print(f'[red]invalid parameters[/red]: {e}')
        ctx.exit(EXIT_USAGE)

    click.echo('\n'.join(lines))


def main():
    cli()


if __name__ == '__main__':
    main()
