import math

import pytest
from click.testing import CliRunner

from selection_lab.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, cli
from selection_lab.errors import OracleSizeError
from selection_lab.harness.report import CSV_HEADER, parse_csv
from selection_lab.numerics import f_of_c


@pytest.fixture
def runner(monkeypatch):
    monkeypatch.delenv('SELECTION_LAB_SEED', raising=False)
    return CliRunner()


def key_values(output: str) -> dict:
    pairs = {}
    for line in output.splitlines():
        key, sep, value = line.partition('=')
        if sep and key.isidentifier():
            pairs[key] = value
    return pairs


def csv_lines(output: str) -> str:
    header = ','.join(CSV_HEADER)
    lines = output.splitlines()
    start = lines.index(header)
    rows = [lines[start]]
    for line in lines[start + 1:]:
        if line.count(',') != len(CSV_HEADER) - 1:
            break
        rows.append(line)
    return '\n'.join(rows) + '\n'


def test_bounds_prints_every_applicable_value(runner):
    result = runner.invoke(cli, ['bounds', '--c', '2', '--d', '1', '--n', '100'])
    assert result.exit_code == EXIT_OK
    values = key_values(result.output)
    assert set(values) >= {'phase_low', 'phase_high', 'f_c', 'g_secretary', 'g_bipartite', 'g_graphic',
                           'kesselheim_bound', 'graphic_bound_f'}
    assert float(values['f_c']) == f_of_c(2.0)
    assert float(values['g_secretary']) == pytest.approx(f_of_c(2.0))


def test_bounds_at_c_equal_e(runner):
    result = runner.invoke(cli, ['bounds'])
    values = key_values(result.output)
    assert result.exit_code == EXIT_OK
    assert 'g_bipartite' in values
    assert float(values['f_c']) == pytest.approx(f_of_c(math.e))


def test_bounds_rejects_bad_c(runner):
    result = runner.invoke(cli, ['bounds', '--c', '0.5'])
    assert result.exit_code == EXIT_USAGE


def test_bounds_figure(runner):
    result = runner.invoke(cli, ['bounds', '--figure', 'naive', '--points', '3'])
    assert result.exit_code == EXIT_OK
    assert result.output.splitlines()[0] == 'c,classical,algorithm1,naive'


def test_secretary_run_emits_csv(runner):
    result = runner.invoke(cli, ['secretary', '--n', '20', '--trials', '50', '--seed', '5', '--c', '2',
                                 '--lambda', '0', '--slack', '1.0'])
    assert result.exit_code == EXIT_OK, result.output
    batches = parse_csv(csv_lines(result.output))
    assert len(batches) == 1
    assert batches[0].seed == 5 and batches[0].trials == 50


def test_same_seed_same_csv(runner):
    args = ['bipartite', '--n', '6', '--m', '5', '--trials', '20', '--seed', '9', '--c', '3', '--d', '1.5',
            '--slack', '1.0']
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert csv_lines(first.output) == csv_lines(second.output)


def test_out_writes_file(runner, tmp_path):
    out = tmp_path / 'result.csv'
    result = runner.invoke(cli, ['graphic', '--algorithm', 'algorithm4', '--n', '12', '--trials', '10',
                                 '--c', '2', '--out', str(out), '--slack', '1.0'])
    assert result.exit_code == EXIT_OK, result.output
    assert out.read_text().startswith('problem,algorithm')


def test_failing_verdict_exits_one(runner, monkeypatch):
    # no ratio can reach a bound of 2
    monkeypatch.setattr('selection_lab.harness.problems.INV_E', 2.0)
    result = runner.invoke(cli, ['secretary', '--algorithm', 'classical', '--n', '10', '--trials', '10',
                                 '--seed', '0', '--slack', '0'])
    assert result.exit_code == EXIT_FAIL


def test_usage_errors(runner, tmp_path):
    assert runner.invoke(cli, ['secretary', '--algorithm', 'kesselheim']).exit_code == EXIT_USAGE
    assert runner.invoke(cli, ['secretary', '--c', '0.5']).exit_code == EXIT_USAGE
    assert runner.invoke(cli, ['graphic', '--c', '2', '--d', '2', '--trials', '5', '--n', '6']).exit_code \
        == EXIT_USAGE
    assert runner.invoke(cli, ['sweep']).exit_code == EXIT_USAGE
    assert runner.invoke(cli, ['sweep', '--config', str(tmp_path / 'missing.toml')]).exit_code == EXIT_USAGE


def test_config_problem_mismatch(runner, tmp_path):
    config = tmp_path / 'grid.toml'
    config.write_text('problem = "graphic"\n')
    assert runner.invoke(cli, ['secretary', '--config', str(config)]).exit_code == EXIT_USAGE


def test_sweep_runs_config(runner, tmp_path):
    config = tmp_path / 'grid.toml'
    config.write_text(
        'problem = "secretary"\n'
        'algorithm = "classical"\n'
        'trials = 30\n'
        'seed = 4\n'
        'slack = 1.0\n'
        'lambda_scale = [0.0]\n'
        'c = [2.0, 3.0]\n'
        '\n'
        '[generator]\n'
        'n = 12\n'
    )
    result = runner.invoke(cli, ['sweep', '--config', str(config), '--trials', '10'])
    assert result.exit_code == EXIT_OK, result.output
    batches = parse_csv(csv_lines(result.output))
    assert [b.c for b in batches] == [2.0, 3.0]
    assert all(b.trials == 10 for b in batches)


def test_environment_seed_overrides_flag(runner, monkeypatch):
    args = ['secretary', '--n', '10', '--trials', '10', '--slack', '1.0']
    monkeypatch.setattr('selection_lab.cli._settings.SEED', 11)
    result = runner.invoke(cli, args + ['--seed', '3'])
    assert parse_csv(csv_lines(result.output))[0].seed == 11


def test_truthful_audit_small(runner):
    result = runner.invoke(cli, ['truthful-audit', '--n', '3', '--m', '2', '--instances', '3', '--max-value', '6'])
    assert result.exit_code == EXIT_OK, result.output
    assert 'violations=0 non_monotone=0' in result.output


def test_library_errors_during_a_run_exit_with_usage(runner, monkeypatch):
    def too_large(graph):
        raise OracleSizeError('graph too large for the exact oracle')

    monkeypatch.setattr('selection_lab.harness.problems.max_weight_forest', too_large)
    result = runner.invoke(cli, ['graphic', '--n', '6', '--trials', '3', '--c', '3', '--d', '1.5'])
    assert result.exit_code == EXIT_USAGE
    assert result.exception is None or isinstance(result.exception, SystemExit)
