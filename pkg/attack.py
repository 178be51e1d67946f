# attack.py
"""
Adversários bizantinos oniscientes.

Os ataques leem os gradientes honestos da rodada corrente e fabricam os
uploads dos workers bizantinos. apply_attack monta a lista completa de
uploads: honestos nos índices 1..H, bizantinos em H+1..N.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from errors import DimensionError

logger = logging.getLogger(__name__)

# μ padrão quando a configuração nomeia o ataque sem informar a força
DEFAULT_NOISE_MU = 300.0
DEFAULT_SIGN_FLIP_MU = -10.0


# --- Tipos de ataque ---


@dataclass(frozen=True)
class NoAttack:
    pass


@dataclass(frozen=True)
class RandomNoise:
    mu: float = DEFAULT_NOISE_MU  # variância por coordenada

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"RandomNoise.mu deve ser >= 0: {self.mu}")


@dataclass(frozen=True)
class SignFlip:
    mu: float = DEFAULT_SIGN_FLIP_MU


@dataclass(frozen=True)
class ZeroGradient:
    pass


AttackKind = Union[NoAttack, RandomNoise, SignFlip, ZeroGradient]


def attack_label(kind: AttackKind) -> str:
    return {
        NoAttack: "none",
        RandomNoise: "noise",
        SignFlip: "signflip",
        ZeroGradient: "zero",
    }[type(kind)]


# --- Fabricação dos uploads ---


def honest_mean(honest: Sequence[np.ndarray]) -> np.ndarray:
    """Média aritmética somada na ordem dos workers."""
    if len(honest) == 0:
        raise DimensionError("lista de gradientes honestos vazia")
    total = np.zeros(np.shape(honest[0]), dtype=np.float64)
    for g in honest:
        if np.shape(g) != total.shape:
            raise DimensionError(f"dimensão {np.shape(g)} != {total.shape}")
        total = total + g
    return total / len(honest)


def craft_random_noise(
    honest: Sequence[np.ndarray], mu: float, count: int, rng: np.random.Generator
) -> List[np.ndarray]:
    if mu < 0:
        raise ValueError(f"mu deve ser >= 0: {mu}")
    if count < 0:
        raise ValueError("count deve ser >= 0")
    mean = honest_mean(honest)
    scale = np.sqrt(mu)
    return [mean + scale * rng.standard_normal(mean.shape) for _ in range(count)]


def craft_sign_flip(honest: Sequence[np.ndarray], mu: float, count: int) -> List[np.ndarray]:
    if count < 0:
        raise ValueError("count deve ser >= 0")
    flipped = mu * honest_mean(honest)
    return [flipped.copy() for _ in range(count)]


def craft_zero_gradient(honest: Sequence[np.ndarray], count: int) -> List[np.ndarray]:
    """Cada bizantino envia -(1/count)·Σ g_h: a média simples de todos os uploads vira zero."""
    if count < 1:
        raise ValueError("ZeroGradient exige ao menos um worker bizantino")
    total = honest_mean(honest) * len(honest)
    crafted = -total / count
    return [crafted.copy() for _ in range(count)]


def apply_attack(
    kind: AttackKind,
    honest: Sequence[np.ndarray],
    byz_count: int,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Lista de uploads da rodada: honestos primeiro, depois os fabricados."""
    if byz_count < 0:
        raise ValueError("byz_count deve ser >= 0")

    if isinstance(kind, NoAttack):
        # Sem ataque todos os N workers são honestos
        if byz_count:
            raise ValueError("NoAttack não admite workers bizantinos (byz_count deve ser 0)")
        crafted = []
    elif isinstance(kind, RandomNoise):
        crafted = craft_random_noise(honest, kind.mu, byz_count, rng)
    elif isinstance(kind, SignFlip):
        crafted = craft_sign_flip(honest, kind.mu, byz_count)
    elif isinstance(kind, ZeroGradient):
        crafted = craft_zero_gradient(honest, byz_count)
    else:
        raise TypeError(f"ataque desconhecido: {kind!r}")

    return list(honest) + crafted
