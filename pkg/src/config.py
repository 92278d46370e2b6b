from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Configuration using Pydantic v2 model_config
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        extra="ignore"  # Ignore extra environment variables not defined in Settings
    )

    # Worker Configuration (number of replicate worker processes)
    max_workers: int = 1

    # Logging
    log_dir: str = "logs"  # Default log directory (relative to project root)
    log_level: str = "INFO"

    # Output
    default_output_dir: str = "results"


settings = Settings()
