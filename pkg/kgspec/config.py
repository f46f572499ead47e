from pydantic_settings import BaseSettings


class Settings(BaseSettings):

    # API settings
    api_host: str = "0.0.0.0"
    api_port: int = 8000

    # Storage settings
    database_path: str = "kgspec_runs.db"
    output_root: str = "runs"

    # Logging settings
    log_level: str = "INFO"

    # Integrator settings
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    z_rtol: float = 1e-8
    max_step_fraction: float = 0.1

    # Quadrature settings
    quad_rtol: float = 1e-10
    quad_limit: int = 200

    # Hypothesis checks
    hypothesis_cap: float = 1e3
    l1_threshold: float = 1e3

    # Zones and diagonalization
    zone_N: float = 10.0
    det_floor: float = 0.5

    # Classification and fitting
    tail_band: float = 0.05
    fit_gate: float = 0.02

    # Semilinear solver
    smallness_multiple: float = 1e3
    alias_tol: float = 1e-6

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "KGSPEC_"
        case_sensitive = False


settings = Settings()
