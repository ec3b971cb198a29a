from pydantic_settings import BaseSettings
from typing import Optional



class Settings(BaseSettings):
    PROJECT_NAME: str = "HoloTTS"
    DEBUG: bool = False

    LOG_DIR: str = "logs"
    LOG_LEVEL: Optional[str] = None
    OUTPUT_DIR: str = "results"
    DEFAULT_PROFILE: str = "ci"

    SOLVER_TOL: float = 1e-8
    SOLVER_MAX_ITERS: int = 200
    WORKERS: int = 1

    class Config:
        env_file = ".env"


settings = Settings()
