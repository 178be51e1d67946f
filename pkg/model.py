# model.py
"""
Modelos do simulador: regressão logística binária com regularização l2
e perceptron de uma camada oculta (softmax) para 10 classes.

Todos os parâmetros vivem em um vetor plano (ModelParams.values); o
ModelShape descreve como fatiar esse vetor em tensores.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Tuple, Union

import numpy as np

from errors import DimensionError, LabelKindError

if TYPE_CHECKING:
    from data import Dataset


class LabelKind(str, Enum):
    BINARY = "binary"  # y em {-1, +1}
    CLASS10 = "class10"  # y em {0..9}


# --- Formas dos modelos ---


@dataclass(frozen=True)
class LogisticShape:
    m: int

    @property
    def size(self) -> int:
        return self.m

    @property
    def label_kind(self) -> LabelKind:
        return LabelKind.BINARY


@dataclass(frozen=True)
class MlpShape:
    inp: int = 784
    hidden: int = 32
    out: int = 10

    @property
    def size(self) -> int:
        return self.hidden * self.inp + self.hidden + self.out * self.hidden + self.out

    @property
    def label_kind(self) -> LabelKind:
        return LabelKind.CLASS10


ModelShape = Union[LogisticShape, MlpShape]


@dataclass(frozen=True)
class ModelParams:
    values: np.ndarray
    shape: ModelShape

    def __post_init__(self):
        if self.values.ndim != 1 or self.values.size != self.shape.size:
            raise DimensionError(
                f"vetor de {self.values.size} parâmetros não corresponde a {self.shape}"
            )

    def unpack(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Retorna visões (W1, b1, W2, b2) do vetor plano (apenas MLP)."""
        s = self.shape
        if not isinstance(s, MlpShape):
            raise LabelKindError("unpack() só existe para o MLP")
        v = self.values
        o1 = s.hidden * s.inp
        o2 = o1 + s.hidden
        o3 = o2 + s.out * s.hidden
        return (
            v[:o1].reshape(s.hidden, s.inp),
            v[o1:o2],
            v[o2:o3].reshape(s.out, s.hidden),
            v[o3:],
        )

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(values, self.shape)


@dataclass(frozen=True)
class Batch:
    """Mini-lote ζ: features (n, m) e rótulos (n,) de um único tipo."""

    features: np.ndarray
    labels: np.ndarray
    label_kind: LabelKind

    def __post_init__(self):
        if len(self.labels) == 0:
            raise DimensionError("mini-lote vazio")

    def __len__(self) -> int:
        return len(self.labels)


def _check_kind(p: ModelParams, kind: LabelKind):
    if p.shape.label_kind != kind:
        raise LabelKindError(
            f"modelo {type(p.shape).__name__} espera rótulos {p.shape.label_kind.value}, "
            f"recebeu {kind.value}"
        )


# --- Inicialização ---


def init_params(shape: ModelShape, seed: int) -> ModelParams:
    """
    Logística: zeros (problema convexo).
    MLP: pesos ~ Normal(0, 2/fan_in) (Kaiming), vieses zero.
    """
    if isinstance(shape, LogisticShape):
        return ModelParams(np.zeros(shape.m), shape)

    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / shape.inp), size=(shape.hidden, shape.inp))
    w2 = rng.normal(0.0, np.sqrt(2.0 / shape.hidden), size=(shape.out, shape.hidden))
    values = np.concatenate(
        [w1.ravel(), np.zeros(shape.hidden), w2.ravel(), np.zeros(shape.out)]
    )
    return ModelParams(values, shape)


# --- Funções numéricas estáveis ---


def _softplus(t: np.ndarray) -> np.ndarray:
    # log(1 + exp(t)) sem overflow
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _sigmoid(t: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


# --- Regressão logística ---


def logistic_loss(p: ModelParams, b: Batch, rho: float) -> float:
    """(1/|b|) Σ log(1 + exp(-y φᵀx)) + (ρ/2)‖x‖²"""
    _check_kind(p, b.label_kind)
    x = p.values
    margins = b.labels * (b.features @ x)
    data_term = float(np.mean(_softplus(-margins)))
    return data_term + 0.5 * rho * float(x @ x)


def logistic_grad(p: ModelParams, b: Batch, rho: float) -> np.ndarray:
    _check_kind(p, b.label_kind)
    x = p.values
    y = b.labels.astype(float)
    margins = y * (b.features @ x)
    coef = -y * _sigmoid(-margins)
    return b.features.T @ coef / len(b) + rho * x


# --- MLP ---


def mlp_forward(p: ModelParams, inputs: np.ndarray) -> np.ndarray:
    """Probabilidades softmax(W2·ReLU(W1 u + b1) + b2); aceita u ou lote (n, in)."""
    if not isinstance(p.shape, MlpShape):
        raise LabelKindError("mlp_forward requer parâmetros de MLP")
    if inputs.shape[-1] != p.shape.inp:
        raise DimensionError(
            f"entrada com {inputs.shape[-1]} features, esperado {p.shape.inp}"
        )
    w1, b1, w2, b2 = p.unpack()
    hidden = _relu(inputs @ w1.T + b1)
    return softmax(hidden @ w2.T + b2)


def mlp_loss_grad(p: ModelParams, b: Batch) -> Tuple[float, np.ndarray]:
    """Entropia cruzada média e gradiente por backpropagation."""
    _check_kind(p, b.label_kind)
    w1, b1, w2, b2 = p.unpack()
    n = len(b)
    u = b.features

    pre = u @ w1.T + b1
    hidden = _relu(pre)
    logits = hidden @ w2.T + b2
    logp = _log_softmax(logits)
    rows = np.arange(n)
    loss = float(-np.mean(logp[rows, b.labels]))

    dlogits = np.exp(logp)
    dlogits[rows, b.labels] -= 1.0
    dlogits /= n

    dw2 = dlogits.T @ hidden
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ w2) * (pre > 0)
    dw1 = dpre.T @ u
    db1 = dpre.sum(axis=0)

    grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
    return loss, grad


# --- Despacho genérico ---


def loss_and_grad(p: ModelParams, b: Batch, rho: float) -> Tuple[float, np.ndarray]:
    if isinstance(p.shape, LogisticShape):
        return logistic_loss(p, b, rho), logistic_grad(p, b, rho)
    return mlp_loss_grad(p, b)


def _mlp_cross_entropy(p: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    # mesmo valor de mlp_loss_grad, sem o custo do backward
    w1, b1, w2, b2 = p.unpack()
    logp = _log_softmax(_relu(features @ w1.T + b1) @ w2.T + b2)
    return float(-np.mean(logp[np.arange(len(labels)), labels]))


def batch_loss(p: ModelParams, b: Batch, rho: float) -> float:
    if isinstance(p.shape, LogisticShape):
        return logistic_loss(p, b, rho)
    _check_kind(p, b.label_kind)
    return _mlp_cross_entropy(p, b.features, b.labels)


def dataset_loss(p: ModelParams, ds: "Dataset", rho: float) -> float:
    if len(ds) == 0:
        raise DimensionError("dataset vazio")
    return batch_loss(p, ds.as_batch(), rho)


def predict(p: ModelParams, features: np.ndarray) -> np.ndarray:
    if isinstance(p.shape, LogisticShape):
        # sign(0) -> +1
        return np.where(features @ p.values >= 0, 1, -1)
    # argmax devolve o menor índice em caso de empate
    return np.argmax(mlp_forward(p, features), axis=1)


def top1_accuracy(p: ModelParams, ds: "Dataset") -> float:
    if len(ds) == 0:
        raise DimensionError("dataset vazio")
    _check_kind(p, ds.label_kind)
    return float(np.mean(predict(p, ds.features) == ds.labels))


# --- Verificação por diferenças finitas ---


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def finite_difference_check(
    p: ModelParams,
    b: Batch,
    rho: float,
    coords: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Compara o gradiente analítico com diferenças centrais nas coordenadas dadas."""
    _, analytic = loss_and_grad(p, b, rho)
    numeric = np.empty(len(coords))
    for j, c in enumerate(coords):
        plus = p.values.copy()
        minus = p.values.copy()
        plus[c] += step
        minus[c] -= step
        numeric[j] = (batch_loss(p.with_values(plus), b, rho) - batch_loss(p.with_values(minus), b, rho)) / (2 * step)
    return relative_error(analytic[coords], numeric)
