import os
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # App configuration
    APP_NAME: str = "Causal HR Sensitivity Analysis"
    SERVICE_NAME: str = "causal-hr"

    # Environment
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")

    # Logging configuration
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: str = os.getenv("LOG_FILE", "logs/causal-hr.log")

    # Parallelism for replicate loops (bootstrap, studies)
    N_JOBS: int = 1

    # Estimation defaults
    DEFAULT_GRID_POINTS: int = 51
    DEFAULT_MIN_AT_RISK: int = 10
    DEFAULT_BOOTSTRAP_REPLICATIONS: int = 500
    DEFAULT_CONFIDENCE_LEVEL: float = 0.95
    DEFAULT_TRUNCATION_PERCENTILE: float = 0.99
    BOOTSTRAP_MAX_FAILURE_FRACTION: float = 0.10

    # Simulation calibration
    CALIBRATION_PILOT_SIZE: int = 100_000
    ADMINISTRATIVE_CENSORING_TIME: float = 10.0

    # Output formatting
    CSV_FLOAT_FORMAT: str = "%.12g"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

# Initialize settings
settings = Settings()
