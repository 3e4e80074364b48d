"""Concept-contrasting composition in Tweedie-mean space.

The joint prompt sits at index 0 of every weight vector and noise list;
concepts occupy indices 1..K. Weight vectors may be batched with shape
(..., K+1), one row per chain, so closeness-aware modulation can differ
between chains.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .guidance import LatentState, cfg_compose, tweedie_mean
from .oracle import JOINT, UNCOND, ConceptSystem, NoisePrediction, exact_epsilon, log_density, noised_marginal
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

CORRECTOR = "corrector"
RESAMPLER = "resampler"
_REGIME_SUM = {CORRECTOR: 1.0, RESAMPLER: 0.0}
_ANCHOR_REGIME = {1.0: RESAMPLER, 2.0: CORRECTOR}
SUM_TOL = 1e-12
DEGENERATE_NORM = 1e-12


class DegenerateCompositionError(ValueError):
    """The composed Tweedie mean has (near) zero norm and cannot be rescaled."""


@dataclass(frozen=True)
class CompositionWeights:
    """Weights w_0..w_K (optionally batched) and the regime they must satisfy."""

    w: np.ndarray
    regime: str

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim == 0 or w.shape[-1] < 2:
            raise ValueError("need at least w_0 and one concept weight")
        if self.regime not in _REGIME_SUM:
            raise ValueError(f"unknown regime {self.regime!r}")
        target = _REGIME_SUM[self.regime]
        err = np.abs(w.sum(-1) - target)
        if np.any(err > SUM_TOL):
            raise ValueError(
                f"{self.regime} weights must sum to {target:g}; max deviation {err.max():.3g}"
            )
        if self.regime == CORRECTOR:
            if np.any(w[..., 0] <= 0.0):
                raise ValueError("corrector weights need w_0 > 0")
            if np.any(w[..., 1:] > 0.0):
                raise ValueError("corrector concept weights must be <= 0")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def num_concepts(self) -> int:
        return self.w.shape[-1] - 1


@dataclass(frozen=True)
class ModulationConfig:
    """Exponential-kernel closeness modulation with an anchored joint weight."""

    beta: float = 0.8
    anchor_w0: float = 2.0

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if float(self.anchor_w0) not in _ANCHOR_REGIME:
            raise ValueError(
                f"anchor_w0 must be 1.0 (resampler) or 2.0 (corrector), got {self.anchor_w0}"
            )

    @property
    def regime(self) -> str:
        return _ANCHOR_REGIME[float(self.anchor_w0)]


def compose_tweedie(means: Sequence[np.ndarray], weights: CompositionWeights) -> np.ndarray:
    """sum_k w_k * means[k] with index 0 the joint prompt."""
    if len(means) != weights.w.shape[-1]:
        raise ValueError(f"{len(means)} means for {weights.w.shape[-1]} weights")
    stacked = np.stack([np.asarray(m, dtype=np.float64) for m in means], axis=-2)
    return np.einsum("...k,...kd->...d", weights.w, stacked)


def _weighted_eps_sum(w, eps_list):
    stacked = np.stack([np.asarray(e, dtype=np.float64) for e in eps_list], axis=-2)
    return np.einsum("...k,...kd->...d", np.asarray(w, dtype=np.float64), stacked)


def _cfg_tweedie_means(x_t, sigma, lam, eps_uncond, cond_eps):
    return [x_t - sigma * (lam * e + (1.0 - lam) * eps_uncond) for e in cond_eps]


def unit_sum_residual(x_t, sigma, lam, eps_uncond, concept_eps, weights) -> float:
    """Distance between the composed CFG Tweedie mean and its single-CFG form.

    Zero (to rounding) exactly when the weights sum to one. ``weights`` is
    a plain array so off-regime weights can be probed.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    means = _cfg_tweedie_means(x_t, sigma, lam, eps_uncond, concept_eps)
    composed = _weighted_eps_sum(w, means)
    closed = x_t - sigma * (eps_uncond + lam * (_weighted_eps_sum(w, concept_eps) - eps_uncond))
    return float(np.linalg.norm(composed - closed))


def zero_sum_residual(x_t, sigma, lam, eps_uncond, concept_eps, weights) -> float:
    """Distance between the composed CFG Tweedie mean and -lam*sigma*sum w_k eps_k.

    Zero (to rounding) exactly when the weights sum to zero.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    means = _cfg_tweedie_means(x_t, sigma, lam, eps_uncond, concept_eps)
    composed = _weighted_eps_sum(w, means)
    closed = -lam * sigma * _weighted_eps_sum(w, concept_eps)
    return float(np.linalg.norm(composed - closed))


def modulation_from_distances(distances, beta: float) -> np.ndarray:
    """Concept weights -a_k / sum_j a_j with affinities a_k = exp(-beta d_k).

    The shift by min(d) leaves the ratio unchanged and avoids underflow.
    """
    d = np.asarray(distances, dtype=np.float64)
    a = np.exp(-beta * (d - d.min(axis=-1, keepdims=True)))
    return -a / a.sum(axis=-1, keepdims=True)


def modulate_weights(
    eps_joint: NoisePrediction,
    concept_eps: Sequence[NoisePrediction],
    config: ModulationConfig,
) -> CompositionWeights:
    """Closeness-aware weights from raw (pre-guidance) conditional noises.

    The concept whose noise is nearest the joint noise gets the most
    negative weight; concept weights always sum to -1.
    """
    if len(concept_eps) < 1:
        raise ValueError("need at least one concept")
    ej = np.asarray(eps_joint.epsilon)
    d = np.stack([np.linalg.norm(ej - np.asarray(e.epsilon), axis=-1) for e in concept_eps], axis=-1)
    wk = modulation_from_distances(d, config.beta)
    w0 = np.full(wk.shape[:-1] + (1,), float(config.anchor_w0))
    return CompositionWeights(np.concatenate([w0, wk], axis=-1), config.regime)


def resample_update(x_t, sigma, lam, cond_eps, eps_uncond, w):
    """Projection onto noise space followed by the unconditional manifold term.

    Returns ``(x_tilde, x_new)`` where x_tilde = -lam*sigma*sum_k w_k eps_k
    never touches ``x_t``.
    """
    x_tilde = -lam * sigma * _weighted_eps_sum(w, cond_eps)
    return x_tilde, x_tilde + sigma * np.asarray(eps_uncond, dtype=np.float64)


def _correct_batch(x_t, sigma, lam, cond_eps, eps_uncond, w):
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    means = _cfg_tweedie_means(x_t, sigma, lam, eps_uncond, cond_eps)
    x_tilde = _weighted_eps_sum(w, means)
    norm_tilde = np.linalg.norm(x_tilde, axis=-1, keepdims=True)
    norm_ref = np.linalg.norm(means[0], axis=-1, keepdims=True)
    bad = (norm_tilde < DEGENERATE_NORM)[..., 0]
    r = norm_ref / np.where(norm_tilde < DEGENERATE_NORM, 1.0, norm_tilde)
    x_new = r * x_tilde + sigma * eps_uncond
    x_new = np.where(bad[..., None], x_t, x_new)
    return x_new, bad


def correct_update(x_t, sigma, lam, cond_eps, eps_uncond, w):
    """Tweedie-mean composition, norm matching to the joint CFG mean, re-noising.

    Raises:
        DegenerateCompositionError: if the composed mean has norm < 1e-12.
    """
    x_new, bad = _correct_batch(x_t, sigma, lam, cond_eps, eps_uncond, w)
    if np.any(bad):
        raise DegenerateCompositionError("composed Tweedie mean has vanishing norm")
    return x_new


WeightsArg = Union[CompositionWeights, ModulationConfig]


def _all_eps(state, system, schedule):
    t = state.t
    cond = [exact_epsilon(system, JOINT, state.x, schedule, t)]
    cond += [exact_epsilon(system, k, state.x, schedule, t) for k in range(1, system.num_concepts + 1)]
    return cond, exact_epsilon(system, UNCOND, state.x, schedule, t)


def _resolve_weights(weights: WeightsArg, cond, regime) -> CompositionWeights:
    if isinstance(weights, ModulationConfig):
        weights = modulate_weights(cond[0], cond[1:], weights)
    if weights.regime != regime:
        raise ValueError(f"{regime} step given {weights.regime} weights")
    if weights.w.shape[-1] != len(cond):
        raise ValueError(f"{weights.w.shape[-1]} weights for {len(cond)} conditions")
    return weights


def resample_step(
    state: LatentState, system: ConceptSystem, schedule: NoiseSchedule, lam: float, weights: WeightsArg
) -> LatentState:
    """One resampler iteration at fixed t.

    ``weights`` is either fixed zero-sum weights or a modulation config, in
    which case weights are recomputed from this iteration's noises.
    """
    cond, unc = _all_eps(state, system, schedule)
    cw = _resolve_weights(weights, cond, RESAMPLER)
    sigma = schedule.sigma_at(state.t)
    _, x_new = resample_update(state.x, sigma, lam, [c.epsilon for c in cond], unc.epsilon, cw.w)
    return LatentState(x_new, state.t)


def correct_step(
    state: LatentState,
    system: ConceptSystem,
    schedule: NoiseSchedule,
    lam: float,
    weights: WeightsArg,
    skip_degenerate: bool = False,
) -> LatentState:
    """One corrector iteration at fixed t.

    With ``skip_degenerate`` chains whose composed mean vanishes keep their
    current latent instead of raising.
    """
    cond, unc = _all_eps(state, system, schedule)
    cw = _resolve_weights(weights, cond, CORRECTOR)
    sigma = schedule.sigma_at(state.t)
    x_new, bad = _correct_batch(state.x, sigma, lam, [c.epsilon for c in cond], unc.epsilon, cw.w)
    if np.any(bad):
        if not skip_degenerate:
            raise DegenerateCompositionError("composed Tweedie mean has vanishing norm")
        log.warning("t=%d: skipped correction for %d degenerate chain(s)", state.t, int(bad.sum()))
    return LatentState(x_new, state.t)


def corrector_log_density(system: ConceptSystem, schedule: NoiseSchedule, t: int, x, weights) -> np.ndarray:
    """Unnormalised w_0 log p_t(x|C) - sum_k |w_k| log p_t(x|c_k)."""
    w = np.asarray(weights.w if isinstance(weights, CompositionWeights) else weights, dtype=np.float64)
    if w.ndim != 1 or w.size != system.num_concepts + 1:
        raise ValueError("need one unbatched weight per condition")
    out = w[0] * log_density(noised_marginal(system.joint, schedule, t), x)
    for k, c in enumerate(system.concepts, start=1):
        if w[k] != 0.0:
            out = out - abs(w[k]) * log_density(noised_marginal(c, schedule, t), x)
    return out
