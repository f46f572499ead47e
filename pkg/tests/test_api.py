"""
Tests for FastAPI endpoints.
"""


class TestAPIEndpoints:
    """Test cases for API endpoints."""

    def test_health_endpoint(self, api_client):
        """Test /health endpoint."""
        response = api_client.get("/health")

        assert response.status_code == 200
        data = response.json()
        assert data['status'] == 'ok'
        assert data['service'] == 'kgspec'
        assert 'timestamp' in data

    def test_classify_scattering(self, api_client):
        """m = (1+t)^-2 with unit speed is a scattering pair."""
        response = api_client.post(
            "/classify",
            json={"profile": {"speed": "unit", "mass": "power_decay", "params": {"p": 2.0}}}
        )

        assert response.status_code == 200
        data = response.json()
        assert data['kind'] == 'Scattering'
        assert data['determined'] is True

    def test_classify_short_horizon_rejected(self, api_client):
        """T_max must exceed 10."""
        response = api_client.post(
            "/classify",
            json={"profile": {"speed": "unit", "mass": "zero"}, "T_max": 5.0}
        )
        assert response.status_code == 422

    def test_classify_unknown_family(self, api_client):
        """Unknown family names are client errors."""
        response = api_client.post(
            "/classify",
            json={"profile": {"speed": "unit", "mass": "no_such_mass"}}
        )
        assert response.status_code == 422

    def test_predict_rates(self, api_client):
        """ell = 0, mu~ = 0.3 predicts potential exponent 1.8."""
        response = api_client.post("/rates/predict", json={"ell": 0.0, "mu_tilde": 0.3})

        assert response.status_code == 200
        data = response.json()
        assert abs(data['potential_exponent'] - 1.8) < 1e-12
        assert data['kinetic_exponent'] == 0.0

    def test_predict_requires_model(self, api_client):
        """Neither alpha nor ell is a client error."""
        response = api_client.post("/rates/predict", json={"mu": 0.3})
        assert response.status_code == 422

    def test_predict_q_range(self, api_client):
        response = api_client.post("/rates/predict", json={"alpha": 0.0, "mu": 0.3, "q": 3.0})
        assert response.status_code == 422

    def test_runs_empty(self, api_client):
        """A fresh database lists no runs."""
        response = api_client.get("/runs")

        assert response.status_code == 200
        data = response.json()
        assert data['total'] == 0
        assert data['runs'] == []

    def test_run_not_found(self, api_client):
        response = api_client.get("/runs/unknown")
        assert response.status_code == 404

    def test_experiment_roundtrip(self, api_client):
        """A prediction run is indexed and retrievable."""
        config = {
            "pipeline": "rates",
            "label": "api-rates",
            "rates": {"ell": 0.0, "mu_tilde": 0.3, "verify": False},
        }
        response = api_client.post("/experiments", json=config)

        assert response.status_code == 200
        data = response.json()
        assert data['passed'] is True
        run_id = data['run_id']

        listing = api_client.get("/runs", params={"pipeline": "rates"}).json()
        assert listing['total'] == 1

        record = api_client.get(f"/runs/{run_id}")
        assert record.status_code == 200
        assert record.json()['summary']['run_id'] == run_id
