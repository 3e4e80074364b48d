"""Discrete noise schedules and the timestep phase partition used by the samplers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

RESAMPLE = "resample"
CORRECT = "correct"
PLAIN = "plain"


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal levels on the grid t = 0..T.

    ``alpha_bar[0]`` is exactly 1 (clean data); ``alpha_bar[T]`` is the most
    noised level. ``sigma`` is always recomputed from ``alpha_bar``.
    """

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.array(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2:
            raise ValueError("alpha_bar must be a 1-D sequence of length T+1 >= 2")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must equal 1")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing in t")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def num_steps(self) -> int:
        return self.alpha_bar.size - 1

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bar)

    def sigma_at(self, t: int) -> float:
        return float(np.sqrt(1.0 - self.alpha_bar[t]))

    def sqrt_alpha_bar_at(self, t: int) -> float:
        return float(np.sqrt(self.alpha_bar[t]))


def build_linear_schedule(num_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear-beta schedule: alpha_bar_t = prod_{i<=t} (1 - beta_i).

    Args:
        num_steps: number of noising steps T.
        beta_start: beta_1.
        beta_end: beta_T.

    Raises:
        ValueError: if ``0 < beta_start <= beta_end < 1`` or ``num_steps >= 1`` fails.
    """
    if int(num_steps) != num_steps or num_steps < 1:
        raise ValueError(f"num_steps must be a positive integer, got {num_steps!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, int(num_steps), dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(alpha_bar)


def build_scaled_linear_schedule(num_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Betas linear in sqrt-space (the usual latent-diffusion training schedule)."""
    if int(num_steps) != num_steps or num_steps < 1:
        raise ValueError(f"num_steps must be a positive integer, got {num_steps!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), int(num_steps)) ** 2
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(alpha_bar)


def default_schedule(num_steps: int = 50) -> NoiseSchedule:
    """50-step DDIM grid over the 1000-step scaled-linear training schedule."""
    return subsample_schedule(build_scaled_linear_schedule(1000, 0.00085, 0.012), num_steps)


def subsample_schedule(schedule: NoiseSchedule, num_steps: int) -> NoiseSchedule:
    """Evenly strided DDIM grid over a longer training schedule.

    Keeps t=0 and the final training step ("trailing" spacing), so the new
    step T coincides with the training schedule's last step.
    """
    total = schedule.num_steps
    if num_steps < 1 or num_steps > total:
        raise ValueError(f"num_steps must lie in [1, {total}], got {num_steps}")
    idx = np.round(np.linspace(0, total, num_steps + 1)).astype(int)
    return NoiseSchedule(schedule.alpha_bar[idx])


def timestep_partition(
    schedule: NoiseSchedule, num_resampling: int, num_correct: int
) -> Dict[int, str]:
    """Assign each timestep T..1 to the resample, correct, or plain phase.

    ``num_correct`` counts every corrected step including the resampling
    ones, so with T=50, T_r=3, T_c=10 steps 50..48 resample, 47..41 correct
    and 40..1 run plain DDIM.
    """
    T = schedule.num_steps
    if num_resampling < 0 or num_correct < 0:
        raise ValueError("phase counts must be non-negative")
    if num_resampling > num_correct:
        raise ValueError(f"T_r={num_resampling} exceeds T_c={num_correct}")
    if num_correct > T:
        raise ValueError(f"T_c={num_correct} exceeds T={T}")
    phases = {}
    for t in range(T, 0, -1):
        done = T - t
        if done < num_resampling:
            phases[t] = RESAMPLE
        elif done < num_correct:
            phases[t] = CORRECT
        else:
            phases[t] = PLAIN
    return phases


def phase_counts(phases: Dict[int, str]) -> Dict[str, int]:
    counts = {RESAMPLE: 0, CORRECT: 0, PLAIN: 0}
    for p in phases.values():
        counts[p] += 1
    return counts


def fraction_to_steps(fraction: float, num_steps: int) -> int:
    """Convert a fraction of the trajectory into a step count (floor)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    return int(np.floor(fraction * num_steps + 1e-9))


def steps_descending(schedule: NoiseSchedule) -> List[int]:
    return list(range(schedule.num_steps, 0, -1))
