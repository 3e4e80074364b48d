"""Classifier-free guidance, Tweedie means and the deterministic DDIM update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import NoisePrediction
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class GuidanceConfig:
    lam: float = 5.0

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError(f"guidance scale must be >= 1, got {self.lam}")


@dataclass(frozen=True)
class LatentState:
    """Latent(s) ``x`` of shape (..., d) at timestep ``t``."""

    x: np.ndarray
    t: int


def cfg_compose(eps_cond: NoisePrediction, eps_uncond: NoisePrediction, lam: float) -> NoisePrediction:
    """lam * eps_cond + (1 - lam) * eps_uncond."""
    if eps_cond.timestep != eps_uncond.timestep:
        raise ValueError(
            f"timestep mismatch: {eps_cond.timestep} vs {eps_uncond.timestep}"
        )
    eps = lam * eps_cond.epsilon + (1.0 - lam) * eps_uncond.epsilon
    return NoisePrediction(eps, eps_cond.condition, eps_cond.timestep)


def tweedie_mean(state: LatentState, eps: NoisePrediction, schedule: NoiseSchedule) -> np.ndarray:
    """Unnormalised Tweedie mean x_t - sigma_t * eps.

    Dividing by sqrt(alpha_bar_t) gives the x_0 estimate; that division is
    left to :func:`ddim_step`.
    """
    if state.t != eps.timestep or state.t < 1:
        raise ValueError(f"state at t={state.t} but epsilon at t={eps.timestep}")
    return state.x - schedule.sigma_at(state.t) * eps.epsilon


def ddim_step(state: LatentState, eps: NoisePrediction, schedule: NoiseSchedule) -> LatentState:
    """Deterministic (eta = 0) DDIM transition from t to t-1."""
    t = state.t
    if t < 1:
        raise ValueError("cannot step below t=0")
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t - 1]
    x_prev = np.sqrt(ab_prev / ab_t) * tweedie_mean(state, eps, schedule) + np.sqrt(
        1.0 - ab_prev
    ) * eps.epsilon
    return LatentState(x_prev, t - 1)
