from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    app_name: str = "Spherical Neural Operator Toolkit"
    app_version: str = "1.0.0"

    artifacts_dir: str = "./artifacts"
    legendre_cache_dir: Optional[str] = None

    collective_timeout_seconds: float = 30.0
    channel_capacity: int = 2
    prefetch_batches: int = 2

    gauss_newton_tolerance: float = 1e-15
    gauss_newton_max_iterations: int = 100

    metrics_textfile: Optional[str] = None

    log_level: str = "INFO"
    log_format: str = "json"

    class Config:
        env_file = ".env"
        case_sensitive = False


settings = Settings()
