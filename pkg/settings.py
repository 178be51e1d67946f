# settings.py
from pathlib import Path
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Sais usados na derivação dos fluxos aleatórios (ver engine.py)
ATTACK_STREAM_SALT = 0xA11ACE
INIT_STREAM_SALT = 0x5EED


class Settings(BaseSettings):
    # --- Caminhos (Paths) ---
    # Caminhos relativos; BYRD_DATA_DIR aponta para a raiz dos datasets
    DATA_DIR: Path = Field(default_factory=lambda: Path("data"))
    OUTPUT_DIR: Path = Field(default_factory=lambda: Path("runs"))
    DB_DIR: Path = Field(default_factory=lambda: Path("database"))

    @property
    def DB_PATH(self) -> str:
        return str(self.DB_DIR / "byrd_runs.db")

    @property
    def SYNC_DATABASE_URL(self) -> str:
        # String de conexão para o SQLModel/SQLAlchemy
        return f"sqlite:///{self.DB_PATH}"

    @property
    def CODE_VERSION(self) -> str:
        return "0.3.0"

    # --- Execução ---
    RECORD_RUNS: bool = True
    LOG_LEVEL: str = "INFO"
    SHOW_PROGRESS: bool = True
    # Threads por rodada para o cálculo dos gradientes honestos
    ROUND_THREADS: int = 1

    # --- Padrões numéricos ---
    DEFAULT_BETA: float = 0.9
    DEFAULT_EVAL_EVERY: int = 50
    TRAIN_SAMPLE_SIZE: int = 10_000
    GEOMED_TOL: float = 1e-6
    GEOMED_MAX_ITER: int = 100
    LOGISTIC_RHO: float = 0.01

    # Carrega automaticamente do arquivo .env (variáveis BYRD_*)
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="BYRD_", extra="ignore"
    )


# Instância única para ser importada em todo o projeto
settings = Settings()
