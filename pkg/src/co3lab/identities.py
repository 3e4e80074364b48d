"""Randomised identity suites shared by ``co3-lab check`` and the test-suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .co3 import unit_sum_residual, zero_sum_residual
from .oracle import ConceptSystem, GaussianMixture, exact_epsilon, log_density, noised_marginal
from .schedule import NoiseSchedule


@dataclass
class CompositionDraw:
    x_t: np.ndarray
    sigma: float
    lam: float
    eps_uncond: np.ndarray
    concept_eps: list
    weights: np.ndarray


def draw_composition_inputs(rng: np.random.Generator, weight_sum: float, dim: int = 2) -> CompositionDraw:
    """x in R^d, sigma in (0,1), lam in [1,10], K+1 in {2..5} noises, weights summing to ``weight_sum``."""
    n = int(rng.integers(2, 6))
    w = rng.normal(size=n)
    w += (weight_sum - w.sum()) / n
    return CompositionDraw(
        x_t=rng.normal(scale=3.0, size=dim),
        sigma=float(rng.uniform(1e-3, 1.0)),
        lam=float(rng.uniform(1.0, 10.0)),
        eps_uncond=rng.normal(size=dim),
        concept_eps=[rng.normal(size=dim) for _ in range(n)],
        weights=w,
    )


def composition_suite(trials: int = 1000, seed: int = 0):
    """Max residuals for both composition forms plus the off-regime failure rates."""
    rng = np.random.default_rng(seed)
    max_a = max_b = 0.0
    fail_a = fail_b = 0
    for _ in range(trials):
        d = draw_composition_inputs(rng, 1.0)
        max_a = max(max_a, unit_sum_residual(d.x_t, d.sigma, d.lam, d.eps_uncond, d.concept_eps, d.weights))
        off = d.weights.copy()
        off[0] += 0.1
        if unit_sum_residual(d.x_t, d.sigma, d.lam, d.eps_uncond, d.concept_eps, off) > 1e-6 * np.linalg.norm(d.x_t):
            fail_a += 1
        d = draw_composition_inputs(rng, 0.0)
        max_b = max(max_b, zero_sum_residual(d.x_t, d.sigma, d.lam, d.eps_uncond, d.concept_eps, d.weights))
        off = d.weights.copy()
        off[0] += 0.1
        if zero_sum_residual(d.x_t, d.sigma, d.lam, d.eps_uncond, d.concept_eps, off) > 1e-6 * np.linalg.norm(d.x_t):
            fail_b += 1
    return {
        "unit_sum_max_residual": max_a,
        "unit_sum_offregime_detect_rate": fail_a / trials,
        "zero_sum_max_residual": max_b,
        "zero_sum_offregime_detect_rate": fail_b / trials,
    }


def random_mixture(rng: np.random.Generator, dim: int = 2, max_components: int = 3) -> GaussianMixture:
    m = int(rng.integers(1, max_components + 1))
    w = rng.uniform(0.2, 1.0, size=m)
    means = rng.normal(scale=2.0, size=(m, dim))
    a = rng.normal(size=(m, dim, dim))
    covs = 0.2 * np.eye(dim) + 0.5 * a @ np.swapaxes(a, -1, -2)
    return GaussianMixture(w / w.sum(), means, covs)


def random_system(rng: np.random.Generator, dim: int = 2) -> ConceptSystem:
    joint = random_mixture(rng, dim)
    k = int(rng.integers(1, 4))
    return ConceptSystem(
        joint,
        tuple(random_mixture(rng, dim) for _ in range(k)),
        random_mixture(rng, dim, 1),
        ("pure",) * joint.num_components,
    )


def fd_epsilon(gmm: GaussianMixture, schedule: NoiseSchedule, t: int, x, h: float = 1e-5) -> np.ndarray:
    """-sigma_t times the central-difference gradient of log p_t."""
    marginal = noised_marginal(gmm, schedule, t)
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (log_density(marginal, x + e) - log_density(marginal, x - e)) / (2 * h)
    return -schedule.sigma_at(t) * grad


def score_suite(schedule: NoiseSchedule, trials: int = 100, seed: int = 0) -> float:
    """Largest relative error of exact_epsilon against finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        system = random_system(rng)
        t = int(rng.integers(1, schedule.num_steps + 1))
        cond = ["joint", "uncond", *range(1, system.num_concepts + 1)][int(rng.integers(0, system.num_concepts + 2))]
        gmm = system.distribution(cond)
        x = gmm.means[0] * np.sqrt(schedule.alpha_bar[t]) + rng.normal(scale=1.5, size=2)
        exact = exact_epsilon(system, cond, x, schedule, t).epsilon
        fd = fd_epsilon(gmm, schedule, t, x)
        worst = max(worst, float(np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-300)))
    return worst
