# database.py
"""
Registro de execuções em SQLite (SQLModel).

Cada execução de `run`, cada célula de `grid` e cada suíte de `verify`
vira uma linha, para consulta posterior via `cli.py history`.
"""

import json
import logging
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import NaiveDatetime
from sqlalchemy.engine import Engine
from sqlmodel import Field, Session, SQLModel, create_engine, desc, select

from settings import settings

logger = logging.getLogger(__name__)


# --- Modelos de Dados ---
class ExperimentRun(SQLModel, table=True):
    __tablename__ = "experiment_runs"
    __table_args__ = {"extend_existing": True}

    id: Optional[int] = Field(default=None, primary_key=True)
    timestamp: NaiveDatetime = Field(default_factory=datetime.now)
    out_dir: str
    dataset: str = Field(index=True)
    rule: str = Field(index=True)
    attack: str = Field(index=True)
    eps: float
    optimizer: str
    beta: float
    seed: int
    iterations: int
    final_acc: float
    best_acc: float
    best_round: int
    final_loss: float
    wall_time_sec: float = 0.0
    code_version: str = Field(default_factory=lambda: settings.CODE_VERSION)
    config_yaml: str


class VerificationRun(SQLModel, table=True):
    __tablename__ = "verification_runs"
    __table_args__ = {"extend_existing": True}

    id: Optional[int] = Field(default=None, primary_key=True)
    timestamp: NaiveDatetime = Field(default_factory=datetime.now)
    suite: str = Field(index=True)
    passed: bool
    measurements: str = Field(description="JSON {nome da verificação: resíduo medido}")


# --- Engine Síncrono ---


@lru_cache(maxsize=None)
def get_engine(url: Optional[str] = None) -> Engine:
    if url is None:
        # Garante que o diretório existe usando pathlib
        Path(settings.DB_DIR).mkdir(parents=True, exist_ok=True)
        url = settings.SYNC_DATABASE_URL
    return create_engine(url, echo=False)


def init_db(engine: Optional[Engine] = None) -> Engine:
    """Cria as tabelas, se ainda não existirem."""
    engine = engine or get_engine()
    SQLModel.metadata.create_all(engine)
    logger.debug("Banco de dados inicializado em %s", engine.url)
    return engine


def get_session(engine: Optional[Engine] = None) -> Session:
    """Retorna uma sessão síncrona."""
    return Session(engine or get_engine())


# --- Funções Utilitárias ---


def record_experiment(run: ExperimentRun, engine: Optional[Engine] = None) -> int:
    engine = init_db(engine)
    with get_session(engine) as session:
        session.add(run)
        session.commit()
        session.refresh(run)
        return run.id


def record_verification(
    suite: str, passed: bool, measurements: dict, engine: Optional[Engine] = None
) -> int:
    engine = init_db(engine)
    row = VerificationRun(suite=suite, passed=passed, measurements=json.dumps(measurements, sort_keys=True))
    with get_session(engine) as session:
        session.add(row)
        session.commit()
        session.refresh(row)
        return row.id


def list_experiments(
    limit: int = 20,
    dataset: Optional[str] = None,
    engine: Optional[Engine] = None,
) -> pd.DataFrame:
    """Execuções mais recentes primeiro, como DataFrame."""
    engine = init_db(engine)
    statement = select(ExperimentRun)
    if dataset:
        statement = statement.where(ExperimentRun.dataset == dataset)
    statement = statement.order_by(desc(ExperimentRun.id)).limit(limit)
    with get_session(engine) as session:
        rows = session.exec(statement).all()
        records = [r.model_dump(exclude={"config_yaml"}) for r in rows]
    return pd.DataFrame(records)


if __name__ == "__main__":
    init_db()
    print(f"Banco de dados inicializado em: {settings.DB_PATH}")
