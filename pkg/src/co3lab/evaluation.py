"""Mode-coverage metrics and a brute-force sampler for the clean corrector density."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .co3 import CompositionWeights, corrector_log_density
from .oracle import ConceptSystem, parse_tag
from .schedule import CORRECT, PLAIN, RESAMPLE, NoiseSchedule

BOX = (-6.0, 6.0)


@dataclass(frozen=True)
class ModeAssignment:
    """Nearest joint mode for one sample; ``index`` is -1 when beyond the radius."""

    index: int
    tag: Optional[str]
    mahalanobis_distance: float


@dataclass(frozen=True)
class RunReport:
    degenerate_fraction: float
    pure_fraction: float
    unassigned_fraction: float
    per_mode_counts: tuple
    mean_min_concept_distance: float
    num_samples: int

    def __post_init__(self):
        fr = (self.degenerate_fraction, self.pure_fraction, self.unassigned_fraction)
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise ValueError(f"fractions out of [0, 1]: {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"fractions sum to {sum(fr)}")

    def as_row(self) -> Dict[str, object]:
        row = {
            "degenerate_fraction": self.degenerate_fraction,
            "pure_fraction": self.pure_fraction,
            "unassigned_fraction": self.unassigned_fraction,
            "mean_min_concept_distance": self.mean_min_concept_distance,
            "num_samples": self.num_samples,
        }
        for i, c in enumerate(self.per_mode_counts):
            row[f"mode_{i}_count"] = c
        return row


def _concept_specific_means(system: ConceptSystem) -> np.ndarray:
    """Concept component means, skipping components shared with the unconditional."""
    unc = system.unconditional
    keep = []
    for c in system.concepts:
        for mu, cov in zip(c.means, c.covs):
            shared = any(np.allclose(mu, um) and np.allclose(cov, uc) for um, uc in zip(unc.means, unc.covs))
            if not shared:
                keep.append(mu)
    if not keep:
        keep = [mu for c in system.concepts for mu in c.means]
    return np.asarray(keep)


def assign_modes(samples, system: ConceptSystem, radius: float = 3.0):
    """Tag each sample with its Mahalanobis-nearest joint mode.

    Returns ``(assignments, report)``. Samples farther than ``radius`` from
    every mode (in that mode's own metric) count as unassigned.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    maha = system.joint.mahalanobis(x)
    nearest = maha.argmin(axis=-1)
    dist = maha[np.arange(n), nearest]
    inside = dist <= radius
    idx = np.where(inside, nearest, -1)

    labels = system.mode_labels
    assignments = [
        ModeAssignment(int(i), labels[i] if i >= 0 else None, float(d)) for i, d in zip(idx, dist)
    ]
    m = system.joint.num_components
    counts = np.bincount(idx[inside], minlength=m)
    deg = system.degenerate_mask
    n_deg = int(counts[deg].sum())
    n_pure = int(counts[~deg].sum())
    n_un = n - n_deg - n_pure

    concept_means = _concept_specific_means(system)
    dmin = np.linalg.norm(x[:, None, :] - concept_means[None], axis=-1).min(axis=-1)
    report = RunReport(
        n_deg / n,
        n_pure / n,
        n_un / n,
        tuple(int(c) for c in counts),
        float(dmin.mean()),
        n,
    )
    return assignments, report


def _grid(resolution: int, box=BOX):
    edges = np.linspace(box[0], box[1], resolution + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    xx, yy = np.meshgrid(centers, centers, indexing="ij")
    return edges, np.stack([xx, yy], axis=-1)


class UnboundedDensityError(ValueError):
    """The grid maximum sits on the box boundary."""


def corrector_grid(system: ConceptSystem, weights, resolution: int, schedule: Optional[NoiseSchedule] = None, t: int = 0):
    """Log corrector density on cell centres of the evaluation box."""
    if schedule is None:
        schedule = NoiseSchedule(np.array([1.0, 0.5]))
    edges, pts = _grid(resolution)
    logp = corrector_log_density(system, schedule, t, pts.reshape(-1, 2), weights).reshape(resolution, resolution)
    return edges, pts, logp


def oracle_corrector_sample(system: ConceptSystem, weights, n: int, seed, grid_resolution: int = 512) -> np.ndarray:
    """Sample the normalised clean corrector density on [-6, 6]^2 by grid inverse CDF.

    A cell is drawn with probability proportional to its density, then the
    point is placed uniformly inside it.

    Raises:
        UnboundedDensityError: if the density peaks on the box boundary.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    edges, _, logp = corrector_grid(system, weights, grid_resolution)
    i, j = np.unravel_index(np.argmax(logp), logp.shape)
    last = grid_resolution - 1
    if i in (0, last) or j in (0, last):
        raise UnboundedDensityError("corrector density peaks on the evaluation box boundary")
    p = np.exp(logp - logp.max()).ravel()
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    cells = np.searchsorted(cdf, rng.random(n), side="right")
    cells = np.minimum(cells, cdf.size - 1)
    ci, cj = np.unravel_index(cells, logp.shape)
    h = edges[1] - edges[0]
    jitter = rng.random((n, 2))
    return np.stack([edges[ci] + h * jitter[:, 0], edges[cj] + h * jitter[:, 1]], axis=-1)


@dataclass
class PhaseEffectCurves:
    timesteps: List[int]
    baseline: float
    resample: List[float]
    correct: List[float]
    cumulative_correct: List[float] = field(default_factory=list)


def phase_effect_curve(
    system: ConceptSystem,
    schedule: NoiseSchedule,
    base_config,
    phase_position_grid: Sequence[int],
    num_chains: int = 2000,
    radius: float = 3.0,
    cumulative: bool = True,
) -> PhaseEffectCurves:
    """Degenerate fraction when correction is applied at a single timestep.

    For every t in the grid one run applies P resampler iterations at t only
    and another applies P corrector iterations at t only. The cumulative
    corrector curve corrects every step >= t instead.
    """
    from .pipeline import chain_seeds, run_with_phases

    seeds = chain_seeds(base_config.seed, num_chains)

    def frac(phases):
        traj = run_with_phases(system, schedule, base_config, seeds, phases)
        return assign_modes(traj.terminal, system, radius)[1].degenerate_fraction

    T = schedule.num_steps
    grid = [int(t) for t in phase_position_grid]
    if any(not 1 <= t <= T for t in grid):
        raise ValueError(f"grid timesteps must lie in [1, {T}]")
    base = frac({})
    res = [frac({t: RESAMPLE}) for t in grid]
    cor = [frac({t: CORRECT}) for t in grid]
    cum = []
    if cumulative:
        cum = [frac({s: CORRECT for s in range(t, T + 1)}) for t in grid]
    return PhaseEffectCurves(grid, base, res, cor, cum)
