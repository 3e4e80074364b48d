"""Analytic concept distributions and their exact noise predictions.

Gaussian mixtures stand in for a pretrained denoiser: every noised marginal
q_t(x | c) is again a Gaussian mixture, so the score and hence the
epsilon-prediction are available in closed form.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule

JOINT = "joint"
UNCOND = "uncond"

Condition = Union[str, int]


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted sum of full-covariance Gaussians.

    Attributes:
        weights: (m,) positive mixing weights summing to one.
        means: (m, d) component means.
        covs: (m, d, d) symmetric positive-definite covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _prec: np.ndarray = field(init=False, repr=False, compare=False)
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _logdet: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covs, dtype=np.float64)
        if cov.ndim == 2:
            cov = cov[None]
        m, d = mu.shape
        if w.shape != (m,) or cov.shape != (m, d, d):
            raise ValueError(
                f"shape mismatch: weights {w.shape}, means {mu.shape}, covs {cov.shape}"
            )
        if np.any(w <= 0.0):
            raise ValueError("mixture weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        if not np.allclose(cov, np.swapaxes(cov, -1, -2), rtol=0, atol=1e-12):
            raise ValueError("covariances must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariances must be positive definite") from err
        for name, arr in (("weights", w), ("means", mu), ("covs", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_prec", np.linalg.inv(cov))
        object.__setattr__(
            self, "_logdet", 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
        )

    @property
    def num_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def gaussian(cls, mean, cov) -> "GaussianMixture":
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = cov * np.eye(mean.size)
        return cls(np.ones(1), mean[None], cov[None])

    @classmethod
    def union(cls, mixtures: Sequence["GaussianMixture"], weights: Sequence[float]):
        """Mixture of mixtures with outer weights ``weights``."""
        w = np.concatenate([wi * g.weights for wi, g in zip(weights, mixtures)])
        return cls(
            w / w.sum(),
            np.concatenate([g.means for g in mixtures]),
            np.concatenate([g.covs for g in mixtures]),
        )

    def component_log_densities(self, x) -> np.ndarray:
        """log(pi_i N(x; mu_i, Sigma_i)) with shape (..., m)."""
        x = np.asarray(x, dtype=np.float64)
        diff = x[..., None, :] - self.means
        maha = np.einsum("...mi,mij,...mj->...m", diff, self._prec, diff)
        d = self.dim
        return np.log(self.weights) - 0.5 * (maha + self._logdet + d * np.log(2 * np.pi))

    def responsibilities(self, x) -> np.ndarray:
        lc = self.component_log_densities(x)
        return np.exp(lc - logsumexp(lc, axis=-1, keepdims=True))

    def score(self, x) -> np.ndarray:
        """Gradient of log density in closed form, shape (..., d)."""
        x = np.asarray(x, dtype=np.float64)
        resp = self.responsibilities(x)
        diff = x[..., None, :] - self.means
        comp = -np.einsum("mij,...mj->...mi", self._prec, diff)
        return np.einsum("...m,...mi->...i", resp, comp)

    def mahalanobis(self, x) -> np.ndarray:
        """Mahalanobis distance of x to every component, shape (..., m)."""
        x = np.asarray(x, dtype=np.float64)
        diff = x[..., None, :] - self.means
        return np.sqrt(np.einsum("...mi,mij,...mj->...m", diff, self._prec, diff))


def log_density(gmm: GaussianMixture, x) -> np.ndarray:
    """Stable log sum_i pi_i N(x; mu_i, Sigma_i)."""
    return logsumexp(gmm.component_log_densities(x), axis=-1)


def noised_marginal(gmm: GaussianMixture, schedule: NoiseSchedule, t: int) -> GaussianMixture:
    """Forward marginal of x_t = sqrt(ab) x_0 + sqrt(1-ab) z."""
    if not 0 <= t <= schedule.num_steps:
        raise ValueError(f"t={t} outside [0, {schedule.num_steps}]")
    ab = float(schedule.alpha_bar[t])
    if ab == 1.0:
        return gmm
    eye = np.eye(gmm.dim)
    return GaussianMixture(
        gmm.weights, np.sqrt(ab) * gmm.means, ab * gmm.covs + (1.0 - ab) * eye
    )


def sample_clean(gmm: GaussianMixture, n: int, seed) -> np.ndarray:
    """Draw n i.i.d. samples (n, d); ``seed`` may be an int or a Generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(gmm.num_components, size=n, p=gmm.weights)
    z = rng.standard_normal((n, gmm.dim))
    return gmm.means[comp] + np.einsum("nij,nj->ni", gmm._chol[comp], z)


_TAG = re.compile(r"^degenerate\((\d+)\)$")


def parse_tag(tag: str):
    """Return None for 'pure', else the 1-based concept index of 'degenerate(k)'."""
    if tag == "pure":
        return None
    m = _TAG.match(tag)
    if m is None:
        raise ValueError(f"mode tag must be 'pure' or 'degenerate(k)', got {tag!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class ConceptSystem:
    """A joint prompt distribution, its K concepts, and the unconditional model."""

    joint: GaussianMixture
    concepts: tuple
    unconditional: GaussianMixture
    mode_labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "mode_labels", tuple(self.mode_labels))
        K = len(self.concepts)
        if K < 1:
            raise ValueError("a concept system needs at least one concept")
        if len(self.mode_labels) != self.joint.num_components:
            raise ValueError("mode_labels must have one tag per joint component")
        for tag in self.mode_labels:
            k = parse_tag(tag)
            if k is not None and not 1 <= k <= K:
                raise ValueError(f"tag {tag!r} references a missing concept (K={K})")

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)

    @property
    def degenerate_mask(self) -> np.ndarray:
        return np.array([parse_tag(t) is not None for t in self.mode_labels])

    def distribution(self, condition: Condition) -> GaussianMixture:
        if condition == JOINT or condition == 0:
            return self.joint
        if condition == UNCOND:
            return self.unconditional
        if isinstance(condition, (int, np.integer)) and 1 <= condition <= self.num_concepts:
            return self.concepts[condition - 1]
        raise ValueError(f"unknown condition {condition!r}")


@dataclass(frozen=True)
class NoisePrediction:
    """Epsilon-prediction for one condition at timestep t; ``epsilon`` is (..., d)."""

    epsilon: np.ndarray
    condition: Condition
    timestep: int


def exact_epsilon(
    system: ConceptSystem, condition: Condition, x_t, schedule: NoiseSchedule, t: int
) -> NoisePrediction:
    """Exact epsilon = -sigma_t * grad log p_t(x_t | condition)."""
    if not 1 <= t <= schedule.num_steps:
        raise ValueError(f"epsilon requested at t={t}; sampling steps are 1..T")
    sigma = schedule.sigma_at(t)
    if sigma == 0.0:
        raise ValueError("sigma_t is zero; epsilon is undefined")
    marginal = noised_marginal(system.distribution(condition), schedule, t)
    eps = -sigma * marginal.score(x_t)
    return NoisePrediction(eps, condition, t)


def four_mode_system() -> ConceptSystem:
    """Default toy system: two concepts, a 4-mode joint with two overlap modes.

    Each concept is half its own sharp mode and half the broad unconditional
    Gaussian, so dividing by a concept density penalises that concept's mode
    without rewarding the far tails.
    """
    cov = 0.3 * np.eye(2)
    uncond = GaussianMixture.gaussian([0.0, 0.0], 4.0 * np.eye(2))
    c1, c2 = (
        GaussianMixture.union([GaussianMixture.gaussian(mu, cov), uncond], [0.5, 0.5])
        for mu in ([-2.0, 0.0], [2.0, 0.0])
    )
    joint = GaussianMixture(
        np.full(4, 0.25),
        np.array([[0.0, 2.0], [0.0, -2.0], [-2.0, 0.0], [2.0, 0.0]]),
        np.repeat(cov[None], 4, axis=0),
    )
    return ConceptSystem(
        joint, (c1, c2), uncond, ("pure", "pure", "degenerate(1)", "degenerate(2)")
    )
