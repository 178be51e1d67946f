# verify.py
"""
Suítes de verificação numérica.

Cada suíte mede resíduos contra oráculos independentes (diferenças
finitas, ordenação, busca em grade, força bruta, substituição manual) e
compara com os limites aceitos. Usadas por `cli.py verify`.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from aggregate import (
    Krum,
    Mean,
    ScenarioSpec,
    agg_cwmed,
    agg_krum,
    agg_mean,
    estimate_resilience,
    geomed_objective,
    weiszfeld,
)
from attack import SignFlip, ZeroGradient, apply_attack, craft_random_noise, honest_mean
from model import (
    Batch,
    LabelKind,
    LogisticShape,
    MlpShape,
    ModelParams,
    finite_difference_check,
    init_params,
)
from optimizer import (
    ServerState,
    TheoremParams,
    aux_sequence_trace,
    classical_nesterov_step,
    error_floor_at_max_stepsize,
    error_floor_bound,
    max_stepsize,
    nesterov_step,
    unroll_identity_residual,
)

logger = logging.getLogger(__name__)

VERIFY_SEED = 20_240_601


@dataclass
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"  [{status}] {self.name}: {self.value:.3e} (limite {self.limit:.1e})"


@dataclass
class SuiteResult:
    name: str
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def measurements(self) -> Dict[str, float]:
        return {c.name: c.value for c in self.checks}

    def at_most(self, name: str, value: float, limit: float):
        self.checks.append(Check(name, float(value), limit, bool(value <= limit)))

    def at_least(self, name: str, value: float, limit: float):
        self.checks.append(Check(name, float(value), limit, bool(value >= limit)))


# --- Gradientes ---


def sample_logistic_point(rng: np.random.Generator, m: int = 54, n: int = 32):
    shape = LogisticShape(m)
    p = ModelParams(rng.standard_normal(m) * 0.5, shape)
    batch = Batch(rng.standard_normal((n, m)), rng.choice([-1, 1], size=n), LabelKind.BINARY)
    return p, batch


def sample_mlp_point(
    rng: np.random.Generator, shape: MlpShape = MlpShape(), n: int = 16, margin: float = 1e-3
):
    """Ponto aleatório do MLP sem pré-ativações perto da dobra da ReLU."""
    while True:
        p = init_params(shape, int(rng.integers(2**31)))
        batch = Batch(rng.standard_normal((n, shape.inp)) * 0.5, rng.integers(0, 10, size=n), LabelKind.CLASS10)
        w1, b1, _, _ = p.unpack()
        if np.min(np.abs(batch.features @ w1.T + b1)) > margin:
            return p, batch


def suite_gradients(points: int = 100, mlp_coords: int = 50, rho: float = 0.01) -> SuiteResult:
    rng = np.random.default_rng(VERIFY_SEED)
    result = SuiteResult("gradients")

    worst = 0.0
    for _ in range(points):
        p, batch = sample_logistic_point(rng)
        worst = max(worst, finite_difference_check(p, batch, rho, np.arange(p.shape.size)))
    result.at_most("logística: erro relativo máximo", worst, 1e-5)

    worst = 0.0
    for _ in range(points):
        p, batch = sample_mlp_point(rng)
        coords = rng.choice(p.shape.size, size=mlp_coords, replace=False)
        worst = max(worst, finite_difference_check(p, batch, 0.0, coords))
    result.at_most("MLP: erro relativo máximo", worst, 1e-4)
    return result


# --- Nesterov ---


def quadratic(dim: int = 10, low: float = 0.5, high: float = 1.0) -> np.ndarray:
    return np.diag(np.linspace(low, high, dim))


def nesterov_trajectory(a: np.ndarray, x0: np.ndarray, eta: float, beta: float, steps: int):
    """Iterados e gradientes da recursão do servidor em f(x) = ½xᵀAx."""
    shape = LogisticShape(len(x0))
    state = ServerState.initial(ModelParams(x0.copy(), shape), eta, beta)
    xs, grads = [x0.copy()], []
    for _ in range(steps):
        g = a @ state.x.values
        grads.append(g)
        state = nesterov_step(state, g)
        xs.append(state.x.values.copy())
    return xs, grads


def suite_nesterov() -> SuiteResult:
    result = SuiteResult("nesterov")
    eta, beta = 0.1, 0.9
    a = quadratic()
    x0 = np.ones(10)

    xs, _ = nesterov_trajectory(a, x0, eta, beta, 100)
    x, y_prev = x0.copy(), x0.copy()
    deviation = 0.0
    for k in range(100):
        x, y_prev = classical_nesterov_step(y_prev, x, a @ x, eta, beta)
        deviation = max(deviation, float(np.linalg.norm(x - xs[k + 1])))
    result.at_most("duas formas: desvio máximo", deviation, 1e-10)

    xs, grads = nesterov_trajectory(a, x0, eta, beta, 50)
    history = list(zip(xs, grads + [a @ xs[-1]]))
    result.at_most("momento desenrolado: resíduo", unroll_identity_residual(history, eta, beta), 1e-8)

    vs = aux_sequence_trace(xs, grads, eta, beta)
    aux = max(
        float(np.linalg.norm((vs[k + 1] - vs[k]) + eta * grads[k] / (1.0 - beta)))
        for k in range(len(grads))
    )
    result.at_most("sequência auxiliar: resíduo", aux, 1e-10)

    worst = 0.0
    for b in (0.0, 0.5, 0.9):
        step = 0.5 * max_stepsize(TheoremParams(sin_gamma=0.0, c1=1.0, c2=0.0, L=1.0, beta=b, eta=1.0))
        xs_b, _ = nesterov_trajectory(a, x0, step, b, 10_000)
        worst = max(worst, float(np.linalg.norm(a @ xs_b[-1])))
    result.at_most("descida em quadrática: ‖∇f(x_K)‖", worst, 1e-6)
    return result


# --- Ataques ---


def suite_attacks() -> SuiteResult:
    rng = np.random.default_rng(VERIFY_SEED + 1)
    result = SuiteResult("attacks")

    honest = list(rng.standard_normal((80, 30)))
    uploads = apply_attack(ZeroGradient(), honest, 20, rng)
    result.at_most("zero-gradient: ‖média dos uploads‖", np.linalg.norm(agg_mean(uploads)), 1e-10)

    x0 = rng.standard_normal(30)
    state = ServerState.initial(ModelParams(x0.copy(), LogisticShape(30)), 0.05, 0.9)
    for _ in range(200):
        batch = list(rng.standard_normal((8, 30)))
        state = nesterov_step(state, agg_mean(apply_attack(ZeroGradient(), batch, 2, rng)))
    result.at_most("zero-gradient + média: ‖x_K − x_0‖", np.linalg.norm(state.x.values - x0), 1e-10)

    mean = honest_mean(honest)
    crafted = apply_attack(SignFlip(-10.0), honest, 20, rng)[80:]
    result.at_most("sign-flip: ‖upload − μ·média‖", max(np.max(np.abs(c - (-10.0) * mean)) for c in crafted), 0.0)

    base = list(rng.standard_normal((5, 54)))
    draws = np.vstack(craft_random_noise(base, 300.0, 10_000, rng))
    var = draws.var(axis=0, ddof=1)
    result.at_most("ruído: desvio relativo máximo da variância", np.max(np.abs(var / 300.0 - 1.0)), 0.05)
    return result


# --- Agregação ---


def _sorted_median(column: np.ndarray) -> float:
    s = sorted(column)
    n = len(s)
    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def brute_force_krum(grads: Sequence[np.ndarray], f: int) -> int:
    n = len(grads)
    best, best_score = -1, np.inf
    for i in range(n):
        others = [j for j in range(n) if j != i]
        d2 = {j: float(np.sum((grads[i] - grads[j]) ** 2)) for j in others}
        score = min(sum(d2[j] for j in subset) for subset in itertools.combinations(others, n - f - 2))
        if score < best_score:
            best, best_score = i, score
    return best


GEOMED_FIXTURES = [
    [(0.0, 0.0), (2.0, 0.0), (1.0, 1.0), (1.0, -1.0)],
    [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
    [(0.0, 0.0), (0.5, 0.2), (0.3, 0.9), (1.0, 1.0), (2.5, -0.5)],
]


def grid_minimum(points: np.ndarray, step: float = 0.005) -> float:
    lo, hi = points.min(axis=0) - 0.5, points.max(axis=0) + 0.5
    gx, gy = np.meshgrid(np.arange(lo[0], hi[0] + step, step), np.arange(lo[1], hi[1] + step, step))
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    total = np.zeros(len(grid))
    for pt in points:
        total += np.linalg.norm(grid - pt, axis=1)
    return float(total.min())


def suite_aggregation() -> SuiteResult:
    rng = np.random.default_rng(VERIFY_SEED + 2)
    result = SuiteResult("aggregation")

    worst = 0.0
    for _ in range(1000):
        n, d = int(rng.integers(1, 10)), int(rng.integers(1, 7))
        g = rng.standard_normal((n, d))
        oracle = np.array([_sorted_median(g[:, j]) for j in range(d)])
        worst = max(worst, float(np.max(np.abs(agg_cwmed(list(g)) - oracle))))
    result.at_most("CwMed vs ordenação: desvio máximo", worst, 1e-12)

    gap, rise = 0.0, 0.0
    for fixture in GEOMED_FIXTURES:
        pts = np.array(fixture)
        res = weiszfeld(list(pts))
        gap = max(gap, geomed_objective(res.point, pts) - grid_minimum(pts))
        obj = np.array(res.objectives)
        rise = max(rise, float(np.max(np.diff(obj), initial=0.0)))
    result.at_most("GeoMed: objetivo − ótimo da grade", gap, 1e-4)
    result.at_most("GeoMed: maior aumento do objetivo", rise, 1e-12)

    mismatches = 0
    for _ in range(300):
        f = int(rng.integers(0, 3))
        n = int(rng.integers(f + 3, 9))
        g = list(rng.standard_normal((n, 4)))
        if not np.array_equal(agg_krum(g, f), g[brute_force_krum(g, f)]):
            mismatches += 1
    result.at_most("Krum vs força bruta: divergências", mismatches, 0)
    return result


# --- Resiliência ---


def suite_resilience(trials: int = 1000) -> SuiteResult:
    rng = np.random.default_rng(VERIFY_SEED + 3)
    result = SuiteResult("resilience")
    direction = rng.standard_normal(10)

    est = estimate_resilience(Mean(), ScenarioSpec(direction, n_honest=10), 30, rng)
    result.at_most("média sem ataque e sem ruído: sin γ", est.sin_gamma_hat, 1e-9)

    est = estimate_resilience(
        Mean(), ScenarioSpec(direction, n_honest=8, n_byzantine=2, noise_std=0.5, attack=ZeroGradient()), 30, rng
    )
    result.at_most("média sob zero-gradient: |sin γ − 1|", abs(est.sin_gamma_hat - 1.0), 1e-9)

    est = estimate_resilience(
        Krum(f=4),
        ScenarioSpec(direction, n_honest=16, n_byzantine=4, noise_std=0.1, attack=SignFlip(-10.0)),
        trials,
        rng,
    )
    result.at_most("Krum sob sign-flip (ε=0.2): sin γ", est.sin_gamma_hat, 0.5)
    return result


# --- Teorema ---


def suite_theorem() -> SuiteResult:
    result = SuiteResult("theorem")
    def tp(**kw) -> TheoremParams:
        return TheoremParams(**{"sin_gamma": 0.0, "c1": 1.0, "c2": 1.0, "L": 1.0, "beta": 0.0, "eta": 0.1, **kw})

    result.at_most("max_stepsize(0, 0, 1, 1) − 1", abs(max_stepsize(tp()) - 1.0), 0.0)
    result.at_most("max_stepsize(0.5, 0, 2, 1) − 0.25", abs(max_stepsize(tp(sin_gamma=0.5, c1=2.0)) - 0.25), 0.0)
    result.at_most("error_floor_bound(0.1, 1, 1, 0, 0) − 0.2", abs(error_floor_bound(tp()) - 0.2), 1e-15)
    result.at_most("error_floor_bound com c2 = 0", error_floor_bound(tp(c2=0.0)), 0.0)

    rise = 0.0
    sins = np.linspace(0.0, 0.95, 20)
    for b in np.linspace(0.0, 0.95, 20):
        bounds = [max_stepsize(tp(sin_gamma=float(s), beta=float(b))) for s in sins]
        rise = max(rise, float(np.max(np.diff(bounds))))
    result.at_most("max_stepsize: maior aumento em sin γ", rise, 0.0)

    worst = 0.0
    for s, b, c1, c2, L in itertools.product((0.0, 0.3), (0.0, 0.5, 0.9), (0.5, 2.0), (0.1, 1.0), (0.5, 3.0)):
        base = tp(sin_gamma=s, beta=b, c1=c1, c2=c2, L=L)
        at_max = TheoremParams(s, c1, c2, L, b, max_stepsize(base))
        expected = error_floor_at_max_stepsize(base)
        worst = max(worst, abs(error_floor_bound(at_max) - expected) / expected)
    result.at_most("piso de erro no passo máximo: erro relativo", worst, 1e-12)
    return result


SUITES: Dict[str, Callable[[], SuiteResult]] = {
    "gradients": suite_gradients,
    "nesterov": suite_nesterov,
    "aggregation": suite_aggregation,
    "attacks": suite_attacks,
    "resilience": suite_resilience,
    "theorem": suite_theorem,
}


def run_suites(name: str = "all") -> List[SuiteResult]:
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise ValueError(f"suíte desconhecida: {name} (opções: all, {', '.join(SUITES)})")

    results = []
    for n in names:
        logger.info("Executando suíte %s", n)
        results.append(SUITES[n]())
    return results
