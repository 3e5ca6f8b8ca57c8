import pytest
from pydantic import ValidationError

from selection_lab.config import Settings


@pytest.fixture
def clean_env(monkeypatch):
    for name in ('SEED', 'WORKERS', 'LOG_LEVEL', 'SECRETARY_SLACK', 'BIPARTITE_SLACK', 'GRAPHIC_SLACK', 'PORT'):
        monkeypatch.delenv(f'SELECTION_LAB_{name}', raising=False)
    return monkeypatch


def test_defaults(clean_env):
    settings = Settings()
    assert settings.SEED is None
    assert settings.WORKERS == 1
    assert settings.PORT == 8080
    assert settings.resolve_seed(42) == 42


def test_environment_seed_wins(clean_env):
    clean_env.setenv('SELECTION_LAB_SEED', '7')
    assert Settings().resolve_seed(42) == 7


def test_slack_per_problem(clean_env):
    clean_env.setenv('SELECTION_LAB_GRAPHIC_SLACK', '0.05')
    settings = Settings()
    assert settings.slack_for('secretary') == 0.01
    assert settings.slack_for('bipartite') == settings.slack_for('truthful') == 0.02
    assert settings.slack_for('graphic') == 0.05
    assert settings.slack_for('unknown') == 0.0


def test_log_level_is_normalised(clean_env):
    clean_env.setenv('SELECTION_LAB_LOG_LEVEL', 'debug')
    assert Settings().LOG_LEVEL == 'DEBUG'


@pytest.mark.parametrize('name, value', [
    ('SEED', '-1'),
    ('WORKERS', '0'),
    ('LOG_LEVEL', 'chatty'),
    ('SECRETARY_SLACK', '-0.1'),
])
def test_invalid_values_are_rejected(clean_env, name, value):
    clean_env.setenv(f'SELECTION_LAB_{name}', value)
    with pytest.raises(ValidationError):
        Settings()
