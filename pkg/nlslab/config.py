from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables (prefix NLSLAB_)."""

    model_config = SettingsConfigDict(
        env_prefix="NLSLAB_", env_file=".env", case_sensitive=False, extra="ignore"
    )

    # Service configuration
    app_name: str = "nlslab"
    app_version: str = "1.0.0"

    # Parallelism across independent ladder runs
    threads: int = 1

    # Logging
    log_level: str = "INFO"
    log_format: str = "json"

    # Time stepping defaults
    default_dt_1d: float = 1e-3
    default_dt_2d: float = 2e-3

    # Conservation drift ceilings (relative); exceeding flags a run
    mass_drift_ceiling: float = 1e-8
    energy_drift_ceiling: float = 1e-4

    # Snapshots held in memory per run
    snapshot_memory_mb: int = 512

    # Rate fits
    fit_floor_factor: float = 10.0
    fit_fraction: float = 0.5
    fit_min_points: int = 5

    # Modulation
    orthogonality_tolerance: float = 1e-10


# Global settings instance
settings = Settings()
