# optimizer.py
"""
Otimizador do servidor: recursão de Nesterov em três linhas

    z' = β z + ∇
    y  = β z' + ∇
    x' = x − η y

mais a forma clássica com look-ahead (usada só para testar a
equivalência), a identidade do momento desenrolado, a sequência
auxiliar v_k e as fórmulas de passo máximo / piso de erro do teorema de
convergência.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from errors import DimensionError, DivergenceError
from model import ModelParams

logger = logging.getLogger(__name__)


# --- Estado do servidor ---


@dataclass(frozen=True)
class ServerState:
    x: ModelParams
    z: np.ndarray  # buffer de momento
    eta: float
    beta: float
    k: int = 0

    def __post_init__(self):
        if self.z.shape != self.x.values.shape:
            raise DimensionError(f"z {self.z.shape} e x {self.x.values.shape} incompatíveis")
        if self.eta <= 0:
            raise ValueError(f"eta deve ser > 0: {self.eta}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta deve estar em [0, 1): {self.beta}")

    @classmethod
    def initial(cls, x: ModelParams, eta: float, beta: float) -> "ServerState":
        return cls(x=x, z=np.zeros_like(x.values), eta=eta, beta=beta, k=0)


def nesterov_step(s: ServerState, grad: np.ndarray) -> ServerState:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != s.z.shape:
        raise DimensionError(f"gradiente {grad.shape} != parâmetros {s.z.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(s.k, "gradiente agregado")

    z_next = s.beta * s.z + grad
    y = s.beta * z_next + grad
    x_next = s.x.values - s.eta * y
    return replace(s, x=s.x.with_values(x_next), z=z_next, k=s.k + 1)


def sgd_step(s: ServerState, grad: np.ndarray) -> ServerState:
    # SGD robusto: a mesma recursão com β = 0
    return nesterov_step(replace(s, beta=0.0), grad)


def classical_nesterov_step(
    y_prev: np.ndarray,
    x: np.ndarray,
    grad_at_x: np.ndarray,
    eta: float,
    beta: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """y = x − η∇f(x); x_next = y + β(y − y_prev). Retorna (x_next, y)."""
    if not (np.shape(y_prev) == np.shape(x) == np.shape(grad_at_x)):
        raise DimensionError("dimensões incompatíveis na forma clássica de Nesterov")
    y = x - eta * grad_at_x
    return y + beta * (y - y_prev), y


# --- Identidades ---


def unroll_identity_residual(
    history: Sequence[Tuple[np.ndarray, np.ndarray]], eta: float, beta: float
) -> float:
    """
    max_k ‖(x_k − x_{k+1})/η − (1+β)∇_k − Σ_{t<k} β^{k+1−t} ∇_t‖

    history[k] = (x_k, ∇_k), com ∇_k o gradiente aplicado no passo k -> k+1.
    """
    if len(history) < 2:
        raise ValueError("histórico precisa de ao menos 2 iterados")
    xs = [np.asarray(x, dtype=np.float64) for x, _ in history]
    grads = [np.asarray(g, dtype=np.float64) for _, g in history]

    worst = 0.0
    for k in range(len(history) - 1):
        lhs = (xs[k] - xs[k + 1]) / eta
        rhs = (1.0 + beta) * grads[k]
        for t in range(k):
            rhs = rhs + beta ** (k + 1 - t) * grads[t]
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def aux_sequence_v(
    x_k: np.ndarray, x_prev: np.ndarray, grad_k: np.ndarray, eta: float, beta: float
) -> np.ndarray:
    """v_k = (x_k − β x_{k−1} + ηβ ∇)/(1−β), com ∇ o gradiente do passo x_{k−1} -> x_k."""
    if beta == 1.0:
        raise ValueError("sequência auxiliar indefinida para beta = 1")
    if not (np.shape(x_k) == np.shape(x_prev) == np.shape(grad_k)):
        raise DimensionError("dimensões incompatíveis na sequência auxiliar")
    return (x_k - beta * x_prev + eta * beta * grad_k) / (1.0 - beta)


def aux_sequence_trace(
    xs: Sequence[np.ndarray], grads: Sequence[np.ndarray], eta: float, beta: float
) -> List[np.ndarray]:
    """v_0 = x_0; grads[k] é o gradiente aplicado no passo x_k -> x_{k+1}."""
    if len(grads) < len(xs) - 1:
        raise ValueError("faltam gradientes para a trajetória")
    vs = [np.asarray(xs[0], dtype=np.float64)]
    for k in range(1, len(xs)):
        vs.append(aux_sequence_v(xs[k], xs[k - 1], grads[k - 1], eta, beta))
    return vs


# --- Teorema de convergência ---


@dataclass(frozen=True)
class TheoremParams:
    sin_gamma: float
    c1: float
    c2: float
    L: float
    beta: float
    eta: float

    def __post_init__(self):
        values = (self.sin_gamma, self.c1, self.c2, self.L, self.beta, self.eta)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"parâmetros não finitos: {self}")
        if not 0.0 <= self.sin_gamma <= 1.0:
            raise ValueError(f"sin_gamma deve estar em [0, 1]: {self.sin_gamma}")
        if self.c1 <= 0 or self.L <= 0:
            raise ValueError("c1 e L devem ser > 0")
        if self.c2 < 0:
            raise ValueError("c2 deve ser >= 0")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta deve estar em [0, 1): {self.beta}")
        if self.eta <= 0:
            raise ValueError("eta deve ser > 0")


def max_stepsize(tp: TheoremParams) -> float:
    """(1 − sin γ)(1 − β)³ / (c1 L (L β⁴ + (1 − β)²))"""
    if tp.sin_gamma == 1.0:
        logger.warning("sin γ = 1: nenhum passo garante convergência")
        return 0.0
    b = tp.beta
    return (1.0 - tp.sin_gamma) * (1.0 - b) ** 3 / (tp.c1 * tp.L * (tp.L * b**4 + (1.0 - b) ** 2))


def error_floor_bound(tp: TheoremParams) -> float:
    """η L c2 / (1 − sin γ) · (L β⁴/(1 − β)³ + 2/(1 − β))"""
    if tp.sin_gamma == 1.0:
        raise ValueError("piso de erro indefinido para sin γ = 1")
    b = tp.beta
    return tp.eta * tp.L * tp.c2 / (1.0 - tp.sin_gamma) * (tp.L * b**4 / (1.0 - b) ** 3 + 2.0 / (1.0 - b))


def error_floor_at_max_stepsize(tp: TheoremParams) -> float:
    # Não depende de η nem de sin γ
    b = tp.beta
    return tp.c2 * (tp.L * b**4 + 2.0 * (1.0 - b) ** 2) / (tp.c1 * (tp.L * b**4 + (1.0 - b) ** 2))


def convergence_bound(tp: TheoremParams, gap: float, K: int) -> float:
    """Lado direito completo: 2(1−β)·gap / (ηK(1 − sin γ)) + piso de erro."""
    if K < 1:
        raise ValueError("K deve ser >= 1")
    if tp.sin_gamma == 1.0:
        raise ValueError("limite indefinido para sin γ = 1")
    transient = 2.0 * (1.0 - tp.beta) * gap / (tp.eta * K * (1.0 - tp.sin_gamma))
    return transient + error_floor_bound(tp)
