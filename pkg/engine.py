# engine.py
"""
Motor de Simulação.

Cada rodada k:
1. O servidor difunde x_k; cada worker honesto sorteia um mini-lote do
   seu shard e calcula g_{n,k}.
2. O adversário (onisciente) fabrica os uploads bizantinos.
3. A regra de agregação produz ∇_k.
4. O servidor aplica Nesterov (ou SGD, β = 0).

Também contém a configuração validada de um experimento (RunConfig), a
derivação dos fluxos aleatórios e a execução de grades de experimentos.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from aggregate import AggregationRule, CwMed, GeoMed, Krum, Mean, aggregate, rule_label
from attack import (
    DEFAULT_NOISE_MU,
    DEFAULT_SIGN_FLIP_MU,
    AttackKind,
    NoAttack,
    RandomNoise,
    SignFlip,
    ZeroGradient,
    apply_attack,
    attack_label,
    honest_mean,
)
from data import Dataset, DatasetConfig, load_dataset, partition_uniform, sample_minibatch
from errors import DivergenceError, LabelKindError
from model import (
    LogisticShape,
    MlpShape,
    ModelParams,
    ModelShape,
    dataset_loss,
    init_params,
    loss_and_grad,
    top1_accuracy,
)
from optimizer import ServerState, nesterov_step, sgd_step
from settings import ATTACK_STREAM_SALT, INIT_STREAM_SALT, settings

logger = logging.getLogger(__name__)


# --- Configuração do experimento ---


class RuleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Literal["mean", "cwmed", "geomed", "krum"]
    tol: float = Field(default_factory=lambda: settings.GEOMED_TOL, gt=0)
    max_iter: int = Field(default_factory=lambda: settings.GEOMED_MAX_ITER, ge=1)
    # Krum: por padrão f = número configurado de bizantinos
    f: Optional[int] = Field(None, ge=0)


class AttackConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: Literal["none", "noise", "signflip", "zero"]
    mu: Optional[float] = None

    @model_validator(mode="after")
    def _check_mu(self):
        if self.name == "noise" and self.mu is not None and self.mu < 0:
            raise ValueError("attack.mu deve ser >= 0 para o ataque de ruído")
        return self


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["logistic", "mlp"]
    hidden: int = Field(32, ge=1)
    rho: float = Field(default_factory=lambda: settings.LOGISTIC_RHO, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_workers: int = Field(ge=1)
    byz_ratio: float = Field(0.0, ge=0.0, lt=1.0)
    iterations: int = Field(ge=1)
    eta: float = Field(gt=0)
    beta: float = Field(default_factory=lambda: settings.DEFAULT_BETA, ge=0.0, lt=1.0)
    batch_size: int = Field(ge=1)
    seed: int = Field(0, ge=0)
    rule: RuleConfig
    attack: AttackConfig
    dataset: DatasetConfig
    model: ModelConfig
    eval_every: int = Field(default_factory=lambda: settings.DEFAULT_EVAL_EVERY, ge=1)
    optimizer: Literal["sgd", "nesterov"] = "nesterov"
    train_sample_size: int = Field(default_factory=lambda: settings.TRAIN_SAMPLE_SIZE, ge=1)

    @property
    def byz_count(self) -> int:
        """round(ε·N) nominal, usado pela validação e pelo f do Krum."""
        return int(np.floor(self.byz_ratio * self.n_workers + 0.5))

    @property
    def active_byz(self) -> int:
        # Sem ataque, todos os N workers se comportam honestamente
        return 0 if self.attack.name == "none" else self.byz_count

    @property
    def n_honest(self) -> int:
        return self.n_workers - self.active_byz

    @property
    def beta_used(self) -> float:
        return 0.0 if self.optimizer == "sgd" else self.beta

    @property
    def krum_f(self) -> int:
        return self.rule.f if self.rule.f is not None else self.byz_count

    @model_validator(mode="after")
    def _check_consistency(self):
        h = self.n_workers - self.byz_count
        if not h > self.n_workers / 2:
            raise ValueError(
                f"é necessário H > N/2 (honestos em maioria estrita): "
                f"N={self.n_workers}, ε={self.byz_ratio} -> H={h}"
            )
        if self.rule.name == "krum" and self.n_workers < self.krum_f + 3:
            raise ValueError(f"Krum exige N >= f + 3 (N={self.n_workers}, f={self.krum_f})")
        if self.attack.name == "zero" and self.active_byz == 0:
            raise ValueError(
                f"ataque zero exige ao menos um worker bizantino (round(εN) >= 1): "
                f"N={self.n_workers}, ε={self.byz_ratio}"
            )
        expected = "logistic" if self.dataset.kind in ("covtype", "synthetic_binary") else "mlp"
        if self.model.kind != expected:
            raise ValueError(
                f"dataset {self.dataset.kind} requer modelo {expected}, recebeu {self.model.kind}"
            )
        return self


def build_rule(cfg: RunConfig) -> AggregationRule:
    name = cfg.rule.name
    if name == "mean":
        return Mean()
    if name == "cwmed":
        return CwMed()
    if name == "geomed":
        return GeoMed(tol=cfg.rule.tol, max_iter=cfg.rule.max_iter)
    return Krum(f=cfg.krum_f)


def build_attack(cfg: RunConfig) -> AttackKind:
    name, mu = cfg.attack.name, cfg.attack.mu
    if name == "noise":
        return RandomNoise(DEFAULT_NOISE_MU if mu is None else mu)
    if name == "signflip":
        return SignFlip(DEFAULT_SIGN_FLIP_MU if mu is None else mu)
    if name == "zero":
        return ZeroGradient()
    return NoAttack()


def model_shape(cfg: ModelConfig, feature_dim: int) -> ModelShape:
    if cfg.kind == "logistic":
        return LogisticShape(feature_dim)
    return MlpShape(inp=feature_dim, hidden=cfg.hidden, out=10)


# --- Fluxos aleatórios ---
# Tudo deriva da semente única: seed ^ worker_id (workers),
# seed ^ 0xA11ACE (ataque), seed ^ 0x5EED (inicialização, split, partição).


def init_seed(seed: int) -> int:
    return seed ^ INIT_STREAM_SALT


def worker_stream(seed: int, worker_id: int) -> np.random.Generator:
    return np.random.default_rng(seed ^ worker_id)


def attack_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed ^ ATTACK_STREAM_SALT)


def init_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(init_seed(seed))


STREAM_DERIVATION = "worker: seed ^ worker_id; ataque: seed ^ 0xA11ACE; init/split: seed ^ 0x5EED"


# --- Resultados ---


@dataclass(frozen=True)
class RoundReport:
    k: int
    train_loss: float
    test_loss: float
    test_acc: float
    grad_norm: float  # ‖média dos honestos‖
    agg_norm: float  # ‖∇_k‖


@dataclass(frozen=True)
class RunSummary:
    final_acc: float
    best_acc: float
    best_round: int
    final_loss: float
    wall_time: float  # segundos
    beta_used: float
    config_echo: RunConfig


@dataclass
class CellResult:
    index: int
    config: RunConfig
    summary: Optional[RunSummary] = None
    reports: List[RoundReport] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def evaluate(p: ModelParams, test: Dataset, rho: float = 0.0) -> Tuple[float, float]:
    """(loss média no conjunto inteiro, acurácia top-1)."""
    return dataset_loss(p, test, rho), top1_accuracy(p, test)


# --- Simulador ---


class FederatedSimulator:
    def __init__(self, cfg: RunConfig, train: Dataset, test: Dataset):
        self.cfg = cfg
        self.train = train
        self.test = test
        self.rho = cfg.model.rho

        shape = model_shape(cfg.model, train.feature_dim)
        if shape.label_kind != train.label_kind:
            raise LabelKindError(
                f"modelo {cfg.model.kind} incompatível com rótulos {train.label_kind.value}"
            )

        seed0 = init_seed(cfg.seed)
        self.shards = partition_uniform(train, cfg.n_honest, seed0)
        self.worker_rngs = [worker_stream(cfg.seed, s.worker_id) for s in self.shards]
        self.attack_rng = attack_stream(cfg.seed)
        self.rule = build_rule(cfg)
        self.attack = build_attack(cfg)
        self._step = sgd_step if cfg.optimizer == "sgd" else nesterov_step
        self.state = ServerState.initial(init_params(shape, seed0), cfg.eta, cfg.beta)

        if len(train) > cfg.train_sample_size:
            sample = np.sort(init_stream(cfg.seed).choice(len(train), cfg.train_sample_size, replace=False))
            self.train_sample = train.subset(sample)
        else:
            self.train_sample = train

        self._pool = (
            ThreadPoolExecutor(max_workers=settings.ROUND_THREADS)
            if settings.ROUND_THREADS > 1
            else None
        )
        logger.info(
            "Simulação: N=%d H=%d bizantinos=%d regra=%s ataque=%s otimizador=%s d=%d",
            cfg.n_workers, cfg.n_honest, cfg.active_byz, rule_label(self.rule),
            attack_label(self.attack), cfg.optimizer, shape.size,
        )

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _worker_gradient(self, i: int) -> np.ndarray:
        batch = sample_minibatch(
            self.train, self.shards[i], self.cfg.batch_size, self.worker_rngs[i]
        )
        loss, grad = loss_and_grad(self.state.x, batch, self.rho)
        if not np.isfinite(loss):
            raise DivergenceError(self.state.k)
        return grad

    def step(self) -> Tuple[float, float]:
        """Executa uma rodada; retorna (‖média honesta‖, ‖∇_k‖)."""
        idx = range(len(self.shards))
        # map preserva a ordem: cada worker escreve no seu slot
        if self._pool is not None:
            honest = list(self._pool.map(self._worker_gradient, idx))
        else:
            honest = [self._worker_gradient(i) for i in idx]

        uploads = apply_attack(self.attack, honest, self.cfg.active_byz, self.attack_rng)
        agg = aggregate(self.rule, uploads)
        self.state = self._step(self.state, agg)
        return float(np.linalg.norm(honest_mean(honest))), float(np.linalg.norm(agg))

    def report(self, k: int, grad_norm: float, agg_norm: float) -> RoundReport:
        p = self.state.x
        train_loss = dataset_loss(p, self.train_sample, self.rho)
        test_loss, test_acc = evaluate(p, self.test, self.rho)
        if not (np.isfinite(train_loss) and np.isfinite(test_loss)):
            raise DivergenceError(k)
        return RoundReport(k, train_loss, test_loss, test_acc, grad_norm, agg_norm)

    def run(self, progress: bool = True) -> List[RoundReport]:
        cfg = self.cfg
        reports: List[RoundReport] = []
        rounds = tqdm(
            range(cfg.iterations),
            desc=f"{cfg.rule.name}/{cfg.attack.name}/{cfg.optimizer}",
            unit="rodada",
            disable=not (progress and settings.SHOW_PROGRESS),
        )
        try:
            for k in rounds:
                grad_norm, agg_norm = self.step()
                # Avaliação após a atualização da rodada k
                if k % cfg.eval_every == 0 or k == cfg.iterations - 1:
                    r = self.report(k, grad_norm, agg_norm)
                    reports.append(r)
                    rounds.set_postfix(acc=f"{r.test_acc:.4f}", loss=f"{r.test_loss:.4f}")
        finally:
            self.close()
        return reports


def summarize(cfg: RunConfig, reports: Sequence[RoundReport], wall_time: float) -> RunSummary:
    best = max(reports, key=lambda r: r.test_acc)  # primeiro máximo
    last = reports[-1]
    return RunSummary(
        final_acc=last.test_acc,
        best_acc=best.test_acc,
        best_round=best.k,
        final_loss=last.test_loss,
        wall_time=wall_time,
        beta_used=cfg.beta_used,
        config_echo=cfg,
    )


def run_training(
    cfg: RunConfig, data_dir: Optional[Path] = None, progress: bool = True
) -> Tuple[RunSummary, List[RoundReport]]:
    train, test = load_dataset(cfg.dataset, init_seed(cfg.seed), data_dir)
    start = time.perf_counter()
    sim = FederatedSimulator(cfg, train, test)
    reports = sim.run(progress=progress)
    summary = summarize(cfg, reports, time.perf_counter() - start)
    logger.info(
        "Execução concluída: best_acc=%.4f (k=%d) final_acc=%.4f final_loss=%.6f em %.1fs",
        summary.best_acc, summary.best_round, summary.final_acc, summary.final_loss, summary.wall_time,
    )
    return summary, reports


# --- Grade de experimentos ---


def _run_cell(args) -> CellResult:
    index, cfg, data_dir, progress = args
    try:
        summary, reports = run_training(cfg, data_dir, progress=progress)
        return CellResult(index, cfg, summary, reports)
    except Exception as e:
        logger.error("Célula %d falhou: %s", index, e)
        return CellResult(index, cfg, error=f"{type(e).__name__}: {e}")


def run_matrix(
    cfgs: Sequence[RunConfig], jobs: int = 1, data_dir: Optional[Path] = None
) -> List[CellResult]:
    """Executa as configurações; resultados na ordem de entrada, falhas isoladas por célula."""
    if not cfgs:
        raise ValueError("run_matrix exige ao menos uma configuração")

    if jobs <= 1:
        return [_run_cell((i, cfg, data_dir, True)) for i, cfg in enumerate(cfgs)]

    tasks = [(i, cfg, data_dir, False) for i, cfg in enumerate(cfgs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(
            tqdm(
                pool.map(_run_cell, tasks),
                total=len(tasks),
                desc="Grade",
                unit="célula",
                disable=not settings.SHOW_PROGRESS,
            )
        )
