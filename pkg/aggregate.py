# aggregate.py
"""
Regras de agregação do servidor: média, mediana coordenada a coordenada
(CwMed), mediana geométrica (GeoMed, Weiszfeld suavizado) e Krum.

Inclui ainda um estimador Monte-Carlo da resiliência bizantina "soft γ"
de uma regra: sin γ e as constantes (c1, c2) do segundo momento.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from attack import AttackKind, NoAttack, apply_attack
from errors import DimensionError
from settings import settings

logger = logging.getLogger(__name__)

DIST_FLOOR = 1e-12


# --- Regras ---


@dataclass(frozen=True)
class Mean:
    pass


@dataclass(frozen=True)
class CwMed:
    pass


@dataclass(frozen=True)
class GeoMed:
    tol: float = field(default_factory=lambda: settings.GEOMED_TOL)
    max_iter: int = field(default_factory=lambda: settings.GEOMED_MAX_ITER)

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"GeoMed.tol deve ser > 0: {self.tol}")
        if self.max_iter < 1:
            raise ValueError("GeoMed.max_iter deve ser >= 1")


@dataclass(frozen=True)
class Krum:
    f: int

    def __post_init__(self):
        if self.f < 0:
            raise ValueError(f"Krum.f deve ser >= 0: {self.f}")


AggregationRule = Union[Mean, CwMed, GeoMed, Krum]


def rule_label(rule: AggregationRule) -> str:
    return type(rule).__name__.lower()


def _stack(grads: Sequence[np.ndarray]) -> np.ndarray:
    if len(grads) == 0:
        raise DimensionError("lista de gradientes vazia")
    dims = {np.shape(g) for g in grads}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise DimensionError(f"vetores com dimensões incompatíveis: {sorted(dims)}")
    return np.asarray(np.vstack(grads), dtype=np.float64)


# --- Média e mediana ---


def agg_mean(grads: Sequence[np.ndarray]) -> np.ndarray:
    g = _stack(grads)
    total = np.zeros(g.shape[1])
    for row in g:  # ordem crescente de worker
        total += row
    return total / len(g)


def agg_cwmed(grads: Sequence[np.ndarray]) -> np.ndarray:
    # Quantidade par: média das duas estatísticas de ordem centrais
    return np.median(_stack(grads), axis=0)


# --- Mediana geométrica ---


@dataclass
class GeoMedResult:
    point: np.ndarray
    objectives: List[float]  # Σ‖m_t − g_i‖ em cada iterado, começando pela média
    iterations: int


def geomed_objective(point: np.ndarray, g: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(g - point, axis=1)))


def weiszfeld(
    grads: Sequence[np.ndarray],
    tol: float = settings.GEOMED_TOL,
    max_iter: int = settings.GEOMED_MAX_ITER,
) -> GeoMedResult:
    g = _stack(grads)
    # Ordem canônica das linhas: resultado bit a bit independente da ordem dos workers
    g = g[np.lexsort(g.T[::-1])]
    m = agg_mean(g)
    objectives = [geomed_objective(m, g)]
    iterations = 0
    for _ in range(max_iter):
        dist = np.linalg.norm(g - m, axis=1)
        w = 1.0 / np.maximum(dist, DIST_FLOOR)
        m_next = (w @ g) / w.sum()
        step = float(np.linalg.norm(m_next - m))
        m = m_next
        iterations += 1
        objectives.append(geomed_objective(m, g))
        if step <= tol:
            break
    return GeoMedResult(point=m, objectives=objectives, iterations=iterations)


def agg_geomed(grads: Sequence[np.ndarray], tol: float = settings.GEOMED_TOL, max_iter: int = settings.GEOMED_MAX_ITER) -> np.ndarray:
    return weiszfeld(grads, tol, max_iter).point


# --- Krum ---


def krum_scores(grads: Sequence[np.ndarray], f: int) -> np.ndarray:
    """score(i) = soma das N−f−2 menores distâncias² de g_i aos demais vetores."""
    g = _stack(grads)
    n = len(g)
    if n < f + 3:
        raise DimensionError(f"Krum exige N >= f + 3 (N={n}, f={f})")
    dist2 = np.empty((n, n))
    for i in range(n):
        # diferenças diretas: seleção invariante a um deslocamento comum
        dist2[i] = np.sum((g - g[i]) ** 2, axis=1)
    np.fill_diagonal(dist2, np.inf)
    nearest = np.sort(dist2, axis=1)[:, : n - f - 2]
    return nearest.sum(axis=1)


def agg_krum(grads: Sequence[np.ndarray], f: int) -> np.ndarray:
    scores = krum_scores(grads, f)
    # argmin devolve o menor índice em caso de empate
    return np.array(grads[int(np.argmin(scores))], dtype=np.float64, copy=True)


# --- Despacho ---


def aggregate(rule: AggregationRule, grads: Sequence[np.ndarray]) -> np.ndarray:
    if isinstance(rule, Mean):
        return agg_mean(grads)
    if isinstance(rule, CwMed):
        return agg_cwmed(grads)
    if isinstance(rule, GeoMed):
        return agg_geomed(grads, rule.tol, rule.max_iter)
    if isinstance(rule, Krum):
        return agg_krum(grads, rule.f)
    raise TypeError(f"regra de agregação desconhecida: {rule!r}")


# --- Estimador de resiliência ---


@dataclass(frozen=True)
class ScenarioSpec:
    true_gradient: np.ndarray  # direção de ∇f; a norma é varrida por magnitudes
    n_honest: int
    n_byzantine: int = 0
    noise_std: float = 0.0
    attack: AttackKind = NoAttack()
    magnitudes: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class ResilienceEstimate:
    sin_gamma_hat: float
    c1_hat: float
    c2_hat: float
    trials: int


def _fit_envelope(xs: np.ndarray, ys: np.ndarray) -> Tuple[float, float]:
    # y <= c1·x + c2 em todos os pontos, com c1 >= 0 ajustado por mínimos quadrados
    if len(xs) == 1:
        c1 = float(ys[0] / xs[0])
    else:
        c1 = max(0.0, float(np.polyfit(xs, ys, 1)[0]))
    c2 = max(0.0, float(np.max(ys - c1 * xs)))
    return c1, c2


def estimate_resilience(
    rule: AggregationRule,
    scenario: ScenarioSpec,
    trials: int,
    rng: np.random.Generator,
) -> ResilienceEstimate:
    if trials < 30:
        raise ValueError(f"trials deve ser >= 30: {trials}")

    direction = np.asarray(scenario.true_gradient, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        raise ValueError("cenário degenerado: ‖∇f‖ = 0 em todos os pontos")
    unit = direction / norm

    sin_hats, xs, ys = [], [], []
    for s in scenario.magnitudes:
        if s == 0:
            logger.debug("magnitude 0 ignorada")
            continue
        true_grad = s * unit
        agg_sum = np.zeros_like(true_grad)
        second_moment = 0.0
        for _ in range(trials):
            honest = [
                true_grad + scenario.noise_std * rng.standard_normal(true_grad.shape)
                for _ in range(scenario.n_honest)
            ]
            uploads = apply_attack(scenario.attack, honest, scenario.n_byzantine, rng)
            agg = aggregate(rule, uploads)
            agg_sum += agg
            second_moment += float(agg @ agg)
        mean_agg = agg_sum / trials
        sq_norm = float(true_grad @ true_grad)
        sin_hats.append(1.0 - float(mean_agg @ true_grad) / sq_norm)
        xs.append(sq_norm)
        ys.append(second_moment / trials)

    if not sin_hats:
        raise ValueError("cenário degenerado: todas as magnitudes são zero")

    c1, c2 = _fit_envelope(np.array(xs), np.array(ys))
    sin_gamma = float(np.clip(max(sin_hats), 0.0, 1.0))
    logger.info(
        "Resiliência %s: sin γ=%.3e c1=%.3e c2=%.3e (%d tentativas)",
        rule_label(rule), sin_gamma, c1, c2, trials,
    )
    return ResilienceEstimate(sin_gamma_hat=sin_gamma, c1_hat=c1, c2_hat=c2, trials=trials)
