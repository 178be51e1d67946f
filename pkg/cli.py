# cli.py
"""
Interface de linha de comando do simulador.

Uso:
    python cli.py run    --config configs/smoke.yaml --out runs/smoke
    python cli.py grid   --config configs/covtype_grid.yaml --out runs/covtype --jobs 4
    python cli.py verify [all|gradients|nesterov|aggregation|attacks|resilience|theorem]
    python cli.py history [--limit 20]

Códigos de saída: 0 sucesso; 1 configuração inválida; 2 falha em execução.
"""

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import pandas as pd
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from database import ExperimentRun, list_experiments, record_experiment, record_verification
from engine import STREAM_DERIVATION, RoundReport, RunConfig, RunSummary, run_matrix, run_training
from errors import ByrdError, ConfigError
from settings import settings
from verify import SUITES, run_suites

logger = logging.getLogger("cli")

METRICS_COLUMNS = ["k", "train_loss", "test_loss", "test_acc", "grad_norm", "agg_norm"]
TABLE_COLUMNS = ["rule", "attack", "eps", "optimizer", "best_acc", "final_loss"]
FLOAT_FORMAT = "%.12g"


# --- Arquivo de configuração ---


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_dir: Optional[Path] = None
    out_dir: Optional[Path] = None


class MatrixConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # Lista vazia mantém o valor da seção run
    rule: List[Literal["mean", "cwmed", "geomed", "krum"]] = Field(default_factory=list)
    attack: List[Literal["none", "noise", "signflip", "zero"]] = Field(default_factory=list)
    byz_ratio: List[float] = Field(default_factory=list)
    optimizer: List[Literal["sgd", "nesterov"]] = Field(default_factory=list)


class ConfigFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    paths: PathsConfig = Field(default_factory=PathsConfig)
    run: RunConfig
    matrix: Optional[MatrixConfig] = None


def parse_config(text: str, source: str = "<texto>") -> ConfigFile:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: YAML inválido ({e})") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: esperado um mapeamento no nível raiz")
    try:
        return ConfigFile.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{source}: configuração inválida\n{e}") from e


def load_config(path: Path) -> ConfigFile:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"arquivo de configuração não encontrado: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(cf: ConfigFile) -> str:
    return yaml.safe_dump(cf.model_dump(mode="json", exclude_none=True), sort_keys=False, allow_unicode=True)


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", exclude_none=True), sort_keys=False, allow_unicode=True)


def with_overrides(cfg: RunConfig, **updates) -> RunConfig:
    """Reaplica a validação completa após substituir campos."""
    data = cfg.model_dump()
    for key, value in updates.items():
        if value is not None:
            data[key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"configuração inválida\n{e}") from e


def cell_name(cfg: RunConfig) -> str:
    return f"{cfg.rule.name}-{cfg.attack.name}-eps{cfg.byz_ratio:g}-{cfg.optimizer}"


def expand_matrix(cf: ConfigFile) -> List[Tuple[str, RunConfig]]:
    """Células na ordem regra × ataque × ε × otimizador."""
    base = cf.run
    m = cf.matrix or MatrixConfig()
    rules = m.rule or [base.rule.name]
    attacks = m.attack or [base.attack.name]
    ratios = m.byz_ratio or [base.byz_ratio]
    optimizers = m.optimizer or [base.optimizer]

    cells = []
    for rule in rules:
        for attack in attacks:
            for eps in ratios:
                for opt in optimizers:
                    mu = base.attack.mu if attack == base.attack.name else None
                    cfg = with_overrides(
                        base,
                        rule={**base.rule.model_dump(), "name": rule},
                        attack={"name": attack, "mu": mu},
                        byz_ratio=eps,
                        optimizer=opt,
                    )
                    cells.append((cell_name(cfg), cfg))
    return cells


# --- Saídas ---


def write_metrics_csv(reports: Sequence[RoundReport], path: Path):
    df = pd.DataFrame([asdict(r) for r in reports], columns=METRICS_COLUMNS)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_metrics_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_summary(summary: RunSummary, path: Path):
    lines = [
        # mesmo formato de metrics.csv e table.csv
        f"final_acc: {FLOAT_FORMAT % summary.final_acc}",
        f"best_acc: {FLOAT_FORMAT % summary.best_acc}",
        f"best_round: {summary.best_round}",
        f"final_loss: {FLOAT_FORMAT % summary.final_loss}",
        f"wall_time_sec: {summary.wall_time:.2f}",
        f"beta_used: {summary.beta_used}",
        f"code_version: {settings.CODE_VERSION}",
        f"streams: {STREAM_DERIVATION}",
        "best_acc = maior acurácia de teste entre as avaliações; final_acc = última avaliação",
        "",
        "# config",
        dump_run_config(summary.config_echo),
    ]
    path.write_text("\n".join(lines), encoding="utf-8")


def read_summary(path: Path) -> dict:
    """Campos `chave: valor` do cabeçalho do summary.txt (antes de `# config`)."""
    fields = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# config"):
            break
        key, sep, value = line.partition(": ")
        if sep:
            fields[key] = value
    return fields


def write_run_outputs(out_dir: Path, summary: RunSummary, reports: Sequence[RoundReport]):
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(reports, out_dir / "metrics.csv")
    write_summary(summary, out_dir / "summary.txt")


def _record(out_dir: Path, summary: RunSummary):
    cfg = summary.config_echo
    try:
        record_experiment(
            ExperimentRun(
                out_dir=str(out_dir),
                dataset=cfg.dataset.kind,
                rule=cfg.rule.name,
                attack=cfg.attack.name,
                eps=cfg.byz_ratio,
                optimizer=cfg.optimizer,
                beta=summary.beta_used,
                seed=cfg.seed,
                iterations=cfg.iterations,
                final_acc=summary.final_acc,
                best_acc=summary.best_acc,
                best_round=summary.best_round,
                final_loss=summary.final_loss,
                wall_time_sec=summary.wall_time,
                config_yaml=dump_run_config(cfg),
            )
        )
    except Exception as e:
        logger.warning("Não foi possível registrar a execução no banco: %s", e)


# --- Comandos ---


def _out_dir(args, cf: ConfigFile) -> Path:
    return Path(args.out or cf.paths.out_dir or settings.OUTPUT_DIR)


def cmd_run(args) -> int:
    cf = load_config(args.config)
    cfg = with_overrides(cf.run, seed=args.seed)
    out_dir = _out_dir(args, cf)

    summary, reports = run_training(cfg, cf.paths.data_dir, progress=not args.quiet)
    write_run_outputs(out_dir, summary, reports)
    if args.record:
        _record(out_dir, summary)

    print(f"Resultados gravados em {out_dir}")
    print(f"  best_acc={summary.best_acc:.4f} (k={summary.best_round})  "
          f"final_acc={summary.final_acc:.4f}  final_loss={summary.final_loss:.6f}")
    return 0


def cmd_grid(args) -> int:
    cf = load_config(args.config)
    cells = expand_matrix(cf)
    if args.seed is not None:
        cells = [(name, with_overrides(cfg, seed=args.seed)) for name, cfg in cells]
    out_dir = _out_dir(args, cf)
    out_dir.mkdir(parents=True, exist_ok=True)

    print(f"Grade com {len(cells)} células ({args.jobs} processo(s))")
    results = run_matrix([cfg for _, cfg in cells], jobs=args.jobs, data_dir=cf.paths.data_dir)

    rows, failed = [], 0
    for (name, cfg), res in zip(cells, results):
        if not res.ok:
            failed += 1
            print(f"  [FALHA] {name}: {res.error}", file=sys.stderr)
            continue
        cell_dir = out_dir / name
        write_run_outputs(cell_dir, res.summary, res.reports)
        if args.record:
            _record(cell_dir, res.summary)
        rows.append(
            {
                "rule": cfg.rule.name,
                "attack": cfg.attack.name,
                "eps": cfg.byz_ratio,
                "optimizer": cfg.optimizer,
                "best_acc": res.summary.best_acc,
                "final_loss": res.summary.final_loss,
            }
        )

    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    table.to_csv(out_dir / "table.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    print(table.to_string(index=False))
    print(f"Tabela gravada em {out_dir / 'table.csv'}")
    return 2 if failed else 0


def cmd_verify(args) -> int:
    results = run_suites(args.suite)
    all_passed = True
    for res in results:
        print(f"[{res.name}] {'PASS' if res.passed else 'FAIL'}")
        for check in res.checks:
            print(check.line())
        all_passed &= res.passed
        if args.record:
            try:
                record_verification(res.name, res.passed, res.measurements)
            except Exception as e:
                logger.warning("Não foi possível registrar a verificação: %s", e)
    return 0 if all_passed else 2


def cmd_history(args) -> int:
    df = list_experiments(limit=args.limit, dataset=args.dataset)
    if df.empty:
        print("Nenhuma execução registrada.")
        return 0
    cols = ["id", "timestamp", "dataset", "rule", "attack", "eps", "optimizer", "best_acc", "final_loss", "out_dir"]
    print(df[cols].to_string(index=False))
    return 0


# --- Parser ---


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="sobrescreve run.seed")
    common.add_argument("--log-level", default=None, help="nível de log (padrão: BYRD_LOG_LEVEL)")
    common.add_argument("--quiet", action="store_true", help="desliga as barras de progresso")
    common.add_argument("--no-record", dest="record", action="store_false", help="não grava no banco de execuções")

    parser = argparse.ArgumentParser(prog="fedrobusto", description="Simulador de aprendizado federado bizantino-robusto")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="executa um experimento")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", parents=[common], help="executa a grade da seção matrix")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify", parents=[common], help="executa as suítes de verificação")
    p.add_argument("suite", nargs="?", default="all", choices=["all", *SUITES])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("history", parents=[common], help="lista as execuções registradas")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--dataset", default=None)
    p.set_defaults(func=cmd_history)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse sai com 2 em erro de uso; aqui erro de parse é 1
        return 0 if e.code == 0 else 1

    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.quiet:
        settings.SHOW_PROGRESS = False
    args.record = args.record and settings.RECORD_RUNS

    try:
        return args.func(args)
    except ConfigError as e:
        print(f"Erro de configuração: {e}", file=sys.stderr)
        return 1
    except (ByrdError, OSError, ValueError) as e:
        print(f"Erro durante a execução: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
