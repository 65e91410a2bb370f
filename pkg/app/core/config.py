from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PROJECT_NAME: str = "wedge-dla"
    PROJECT_VERSION: str = "1.0.0"

    # Runs
    OUTPUT_ROOT: str = "runs"
    CACHE_DIR: str = ".cache/wedge-dla"
    WORKERS: int = 1
    LOG_LEVEL: str = "INFO"

    # Oracle
    ORACLE_METHOD: str = "cg"
    ORACLE_TOLERANCE: float = 1e-12
    ORACLE_MAX_ITERATIONS: int = 100_000
    ORACLE_RESIDUAL_LIMIT: float = 1e-10
    ORACLE_MAX_FREE_SITES: int = 200_000

    # Walks
    STEP_CAP: int = 1_000_000_000
    UNIFORM_CHUNK: int = 4096
    TRACE_WALKS: bool = False

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )


# read once at import; tests set the environment first
settings = Settings()
