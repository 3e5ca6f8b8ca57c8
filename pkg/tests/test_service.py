import pytest
from fastapi.testclient import TestClient

from selection_lab import __version__
from selection_lab.numerics import f_of_c
from services.lab_service import MAX_SERVICE_TRIALS, app


@pytest.fixture
def client(monkeypatch):
    monkeypatch.setattr('services.lab_service._settings.SEED', None)
    return TestClient(app)


def test_health(client):
    response = client.get('/health')
    assert response.status_code == 200
    assert response.json() == {'status': 'ok', 'version': __version__}


def test_bounds(client):
    response = client.post('/bounds', json={'c': 2.0, 'd': 1.0, 'lam': 0.1, 'eta': 0.0, 'opt': 1.0})
    assert response.status_code == 200
    details = response.json()['details']
    assert details['f_c'] == pytest.approx(f_of_c(2.0))
    assert {'g_secretary', 'g_bipartite', 'g_graphic'} <= set(details)


def test_bounds_without_phase_two(client):
    details = client.post('/bounds', json={'c': 2.0, 'd': 2.0}).json()['details']
    assert 'g_bipartite' not in details
    assert 'g_secretary' in details


@pytest.mark.parametrize('body', [{'c': 0.5}, {'opt': 0.0}, {'eta': -1.0}])
def test_bounds_rejects_bad_parameters(client, body):
    response = client.post('/bounds', json=body)
    assert response.status_code == 400
    assert response.json()['status'] == 'error'


def test_small_experiment(client):
    body = {'problem': 'secretary', 'algorithm': 'classical', 'generator': {'n': 12}, 'c': [2.0],
            'trials': 20, 'seed': 1, 'slack': 1.0}
    response = client.post('/experiments', json=body)
    assert response.status_code == 200
    details = response.json()['details']
    assert details['csv'].startswith('problem,algorithm')
    assert details['verdicts'] == ['PASS']
    assert details['passed'] is True
    assert client.post('/experiments', json=body).json()['details']['csv'] == details['csv']


def test_experiment_reports_skipped_cells(client):
    body = {'problem': 'graphic', 'algorithm': 'algorithm5', 'generator': {'n': 8, 'graph': 'tree'},
            'c': [3.0], 'd': [1.5, 3.0], 'trials': 5, 'slack': 1.0}
    details = client.post('/experiments', json=body).json()['details']
    assert len(details['verdicts']) == 1
    assert details['skipped'][0]['d'] == 3.0


def test_experiment_rejections(client):
    too_big = {'problem': 'secretary', 'trials': MAX_SERVICE_TRIALS + 1}
    assert client.post('/experiments', json=too_big).status_code == 400
    assert client.post('/experiments', json={'problem': 'unknown'}).status_code == 400
    all_skipped = {'problem': 'bipartite', 'algorithm': 'algorithm3', 'generator': {'n': 4}, 'c': [2.0],
                   'd': [2.0], 'trials': 5}
    response = client.post('/experiments', json=all_skipped)
    assert response.status_code == 400
    assert 'c > d' in response.json()['details'][0]
