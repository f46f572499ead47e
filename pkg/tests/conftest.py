"""
Pytest configuration and fixtures for kgspec tests.
"""
import pytest
import tempfile
from pathlib import Path

from kgspec.coeffs import (
    constant_mass,
    exp_power_mass,
    exponential_speed,
    log_mass,
    make_profile,
    polynomial_speed,
    power_decay_mass,
    power_mass,
    unit_speed,
    zero_mass,
)
from kgspec.database import Database


@pytest.fixture
def temp_db():
    """Create a temporary database for testing."""
    with tempfile.NamedTemporaryFile(suffix='.db', delete=False) as tmp:
        db_path = tmp.name

    db = Database(db_path)
    yield db

    # Cleanup
    Path(db_path).unlink(missing_ok=True)


@pytest.fixture
def tmp_output(tmp_path):
    """Run root inside the pytest temporary directory."""
    root = tmp_path / "runs"
    root.mkdir()
    return root


@pytest.fixture
def api_client(tmp_path, monkeypatch):
    """Create a test client for the FastAPI app with isolated storage."""
    from fastapi.testclient import TestClient
    from kgspec.api.main import app
    from kgspec.config import settings
    monkeypatch.setattr(settings, "database_path", str(tmp_path / "api_runs.db"))
    monkeypatch.setattr(settings, "output_root", str(tmp_path / "api_runs"))
    return TestClient(app)


@pytest.fixture
def klein_gordon():
    """a = 1, m = 1."""
    speed = unit_speed()
    return make_profile(speed, constant_mass(speed, 1.0), label="klein-gordon")


@pytest.fixture
def free_wave():
    """a = 1, m = 0."""
    speed = unit_speed()
    return make_profile(speed, zero_mass(speed), label="free-wave")


@pytest.fixture
def scattering_profile():
    """a = 1, m = (1+t)^-2."""
    speed = unit_speed()
    return make_profile(speed, power_decay_mass(speed, p=2.0), label="scattering")


@pytest.fixture
def log_mass_profile():
    """a = 1, m = mu0 ln(e+t)^-gamma / (e+t)."""
    speed = unit_speed()
    return make_profile(speed, log_mass(speed, mu0=0.5, gamma=0.3), label="log-mass")


@pytest.fixture
def polynomial_effective():
    """a = 1+t, m = 1."""
    speed = polynomial_speed(1.0)
    return make_profile(speed, power_mass(speed, mu0=1.0, eps=1.0), label="polynomial-effective")


@pytest.fixture
def exponential_effective():
    """a = e^t, m = (1+t)^2."""
    speed = exponential_speed()
    return make_profile(speed, exp_power_mass(speed, mu0=1.0, eps=2.0), label="exponential-effective")


@pytest.fixture
def grey_zone():
    """a = e^t, m = 0.3."""
    speed = exponential_speed()
    return make_profile(speed, constant_mass(speed, 0.3), label="grey-zone")


@pytest.fixture
def exponential_free():
    """a = e^t, m = 0."""
    speed = exponential_speed()
    return make_profile(speed, zero_mass(speed), label="exponential-free")
