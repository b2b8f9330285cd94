# ruff: noqa: PLR6301, PLR2004, E501
from sqlmodel import Session

from src import __version__
from src.db import record_report
from src.schemas.schemas import RevuzReport

# HTTP Status Code Constants
HTTP_200_OK = 200
HTTP_404_NOT_FOUND = 404
HTTP_422_UNPROCESSABLE_ENTITY = 422

K2_SPEC = {
    'states': ['a', 'b'],
    'rates': [[0.0, 1.0], [1.0, 0.0]],
    'kill': [1.0, 1.0],
    'm': [1.0, 1.0],
}


def _revuz(name: str, passed: bool) -> RevuzReport:
    return RevuzReport(
        name=name, state='a', exact=2 / 3, estimate=0.66, standard_error=0.01,
        z_score=-0.67, samples=1000, seed=3, chunk_size=500, passed=passed,
    )


class TestIndex:
    """Test the informational endpoints."""

    def test_index(self, client):
        """Test the root endpoint."""
        response = client.get('/')
        assert response.status_code == HTTP_200_OK
        assert response.json() == {'message': 'permfield', 'version': __version__}

    def test_about(self, client):
        """Test the about endpoint."""
        response = client.get('/about')
        assert response.status_code == HTTP_200_OK
        assert 'loop soups' in response.json()['message']


class TestMomentsEndpoint:
    """Test POST /moments."""

    def test_k2(self, client):
        """Test the K2 moment table."""
        response = client.post(
            '/moments', json={'model': K2_SPEC, 'measures': {'a': {'a': 1.0}}}
        )
        assert response.status_code == HTTP_200_OK
        rows = response.json()
        second = next(
            r for r in rows
            if r['kind'] == 'alpha_permanental' and r['order'] == 2
        )
        assert abs(second['value'] - 4 / 9) < 1e-12

    def test_transient_required(self, client):
        """Test that a chain without killing is rejected."""
        spec = {**K2_SPEC, 'kill': [0.0, 0.0]}
        response = client.post(
            '/moments', json={'model': spec, 'measures': {'a': {'a': 1.0}}}
        )
        assert response.status_code == HTTP_422_UNPROCESSABLE_ENTITY

    def test_unknown_state(self, client):
        """Test that measures must name known states."""
        response = client.post(
            '/moments', json={'model': K2_SPEC, 'measures': {'a': {'z': 1.0}}}
        )
        assert response.status_code == HTTP_422_UNPROCESSABLE_ENTITY

    def test_malformed_body(self, client):
        """Test request validation."""
        response = client.post('/moments', json={'measures': {}})
        assert response.status_code == HTTP_422_UNPROCESSABLE_ENTITY


class TestOtherEndpoints:
    """Test norms, isomorphism and lattice endpoints."""

    def test_norms(self, client):
        """Test the norm table."""
        response = client.post(
            '/norms', json={'model': K2_SPEC, 'measures': {'a': {'a': 1.0}}}
        )
        assert response.status_code == HTTP_200_OK
        (row,) = response.json()
        assert row['measure'] == 'a'
        assert abs(row['zero'] - 1.0) < 1e-12

    def test_isomorphism(self, client):
        """Test a degree-2 isomorphism check."""
        response = client.post(
            '/isomorphism',
            json={
                'model': K2_SPEC,
                'alpha': 0.5,
                'rho': {'a': 1.0},
                'phi': {'b': 1.0},
                'measures': [{'a': 1.0, 'b': -0.5}],
                'degrees': [2],
            },
        )
        assert response.status_code == HTTP_200_OK
        report = response.json()
        assert report['passed']
        assert report['rel_diff'] <= 1e-9

    def test_isomorphism_negative_rho(self, client):
        """Test that rho must be nonnegative."""
        response = client.post(
            '/isomorphism',
            json={
                'model': K2_SPEC,
                'rho': {'a': -1.0},
                'phi': {'b': 1.0},
                'measures': [{'a': 1.0}],
                'degrees': [1],
            },
        )
        assert response.status_code == HTTP_422_UNPROCESSABLE_ENTITY

    def test_levy(self, client):
        """Test the lattice summary."""
        response = client.post(
            '/levy',
            json={'d': 1, 'N': 32, 'beta': 1.0, 'exponent': {'kind': 'rw'}},
        )
        assert response.status_code == HTTP_200_OK
        report = response.json()
        assert report['parseval_error'] < 1e-10
        assert report['phi_omega'] == []


class TestRuns:
    """Test the run ledger."""

    def test_empty(self, client):
        """Test an empty ledger."""
        response = client.get('/runs')
        assert response.status_code == HTTP_200_OK
        assert response.json() == []

    def test_filter(self, client, session: Session):
        """Test filtering runs by outcome."""
        record_report(session, 'verify', _revuz('revuz_k2', passed=True))
        record_report(session, 'verify', _revuz('revuz_k4', passed=False))
        response = client.get('/runs', params={'passed': True})
        assert response.status_code == HTTP_200_OK
        runs = response.json()
        assert len(runs) == 1
        assert runs[0]['name'] == 'revuz_k2'
        assert len(client.get('/runs').json()) == 2

    def test_read_run(self, client, session: Session):
        """Test reading one run."""
        run = record_report(session, 'verify', _revuz('revuz_k2', passed=True))
        response = client.get(f'/runs/{run.id}')
        assert response.status_code == HTTP_200_OK
        data = response.json()
        assert data['command'] == 'verify'
        assert data['seed'] == 3
        assert '"revuz_k2"' in data['payload']

    def test_missing_run(self, client):
        """Test a missing run."""
        response = client.get('/runs/999')
        assert response.status_code == HTTP_404_NOT_FOUND
        assert response.json()['detail'] == 'Run not found'
