import json

from sqlmodel import Session, select

from database import (
    ExperimentRun,
    VerificationRun,
    get_engine,
    list_experiments,
    record_experiment,
    record_verification,
)
from settings import settings


def make_run(dataset="synthetic_binary", rule="krum", best_acc=0.9) -> ExperimentRun:
    return ExperimentRun(
        out_dir="runs/x",
        dataset=dataset,
        rule=rule,
        attack="signflip",
        eps=0.2,
        optimizer="nesterov",
        beta=0.9,
        seed=7,
        iterations=10,
        final_acc=best_acc - 0.01,
        best_acc=best_acc,
        best_round=5,
        final_loss=0.3,
        config_yaml="n_workers: 10\n",
    )


def test_record_and_list(isolated_dirs):
    first = record_experiment(make_run(best_acc=0.8))
    second = record_experiment(make_run(rule="mean", best_acc=0.7))
    assert second > first
    assert (isolated_dirs / "database" / "byrd_runs.db").exists()

    df = list_experiments()
    assert list(df["rule"]) == ["mean", "krum"]  # mais recentes primeiro
    assert "config_yaml" not in df.columns
    assert set(df["code_version"]) == {settings.CODE_VERSION}


def test_list_filters_and_limits(isolated_dirs):
    for i in range(5):
        record_experiment(make_run(dataset="covtype" if i % 2 else "mnist"))
    assert len(list_experiments(limit=2)) == 2
    assert set(list_experiments(dataset="covtype")["dataset"]) == {"covtype"}
    assert len(list_experiments(dataset="covtype")) == 2


def test_empty_history(isolated_dirs):
    assert list_experiments().empty


def test_record_verification(isolated_dirs):
    row_id = record_verification("theorem", True, {"b": 0.0, "a": 1e-16})
    with Session(get_engine()) as session:
        row = session.exec(select(VerificationRun).where(VerificationRun.id == row_id)).one()
    assert row.passed and row.suite == "theorem"
    assert json.loads(row.measurements) == {"a": 1e-16, "b": 0.0}


def test_explicit_engine(tmp_path):
    engine = get_engine(f"sqlite:///{tmp_path / 'other.db'}")
    record_experiment(make_run(), engine=engine)
    assert len(list_experiments(engine=engine)) == 1


def test_settings_directories_are_relative():
    fields = type(settings).model_fields
    assert "BASE_DIR" not in fields
    for name in ("DATA_DIR", "OUTPUT_DIR", "DB_DIR"):
        assert not fields[name].get_default(call_default_factory=True).is_absolute()
