"""Full sampling runs: plain CFG, Composable Diffusion, and the hybrid CO3 sampler.

Chains are vectorised along the leading axis. Chain ``i`` draws its initial
noise from its own generator seeded with ``seeds[i]``, so any chain can be
reproduced alone.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import schedule as sched
from .co3 import ModulationConfig, correct_step, resample_step
from .guidance import LatentState, cfg_compose, ddim_step
from .oracle import JOINT, UNCOND, ConceptSystem, NoisePrediction, exact_epsilon
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

PLAIN_CFG = "plain_cfg"
COMPOSABLE = "composable_diffusion"
CO3 = "co3"
METHODS = (PLAIN_CFG, COMPOSABLE, CO3)


@dataclass(frozen=True)
class SamplerConfig:
    method: str = CO3
    lam: float = 5.0
    num_steps: int = 50
    num_resampling: int = 3
    num_correct: int = 10
    num_iters: int = 5
    beta: float = 0.8
    resampler_anchor: float = 1.0
    corrector_anchor: float = 2.0
    composable_lambdas: Optional[Tuple[float, ...]] = None
    seed: int = 0

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))
        if self.composable_lambdas is not None:
            object.__setattr__(self, "composable_lambdas", tuple(float(v) for v in self.composable_lambdas))

    def validation_errors(self) -> List[str]:
        errs = []
        if self.method not in METHODS:
            errs.append(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.lam >= 1.0:
            errs.append(f"lam must be >= 1, got {self.lam}")
        if self.num_steps < 1:
            errs.append(f"num_steps must be >= 1, got {self.num_steps}")
        if not 0 <= self.num_resampling <= self.num_correct <= self.num_steps:
            errs.append(
                "need 0 <= num_resampling <= num_correct <= num_steps, got "
                f"{self.num_resampling}, {self.num_correct}, {self.num_steps}"
            )
        if self.num_iters < 1:
            errs.append(f"num_iters must be >= 1, got {self.num_iters}")
        if not self.beta > 0:
            errs.append(f"beta must be > 0, got {self.beta}")
        if float(self.resampler_anchor) != 1.0:
            errs.append("resampler_anchor must be 1.0 (zero-sum weights)")
        if float(self.corrector_anchor) != 2.0:
            errs.append("corrector_anchor must be 2.0 (unit-sum weights)")
        if self.method == COMPOSABLE and self.composable_lambdas is None:
            errs.append("composable_diffusion needs composable_lambdas")
        return errs

    @property
    def resampler_modulation(self) -> ModulationConfig:
        return ModulationConfig(self.beta, self.resampler_anchor)

    @property
    def corrector_modulation(self) -> ModulationConfig:
        return ModulationConfig(self.beta, self.corrector_anchor)

    def label(self) -> str:
        if self.method == CO3:
            return (
                f"co3(T_r={self.num_resampling},T_c={self.num_correct},P={self.num_iters},"
                f"beta={self.beta:g},lam={self.lam:g})"
            )
        if self.method == COMPOSABLE:
            return f"composable_diffusion(lams={','.join(f'{v:g}' for v in self.composable_lambdas)})"
        return f"plain_cfg(lam={self.lam:g})"

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["composable_lambdas"] is not None:
            d["composable_lambdas"] = list(d["composable_lambdas"])
        return d


@dataclass
class Trajectory:
    """States from t=T down to t=0 plus the phase applied at each step."""

    states: List[LatentState]
    phases: Dict[int, str]
    seeds: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1].x

    def __post_init__(self):
        ts = [s.t for s in self.states]
        if any(a <= b for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timesteps must be strictly decreasing")


def chain_seeds(seed: int, n: int) -> np.ndarray:
    return np.arange(seed, seed + n, dtype=np.int64)


def initial_noise(seeds: Sequence[int], dim: int = 2) -> np.ndarray:
    """x_T ~ N(0, I), one independent generator per chain."""
    return np.stack([np.random.default_rng(int(s)).standard_normal(dim) for s in seeds])


def _as_seeds(seeds: Union[int, Sequence[int]]) -> np.ndarray:
    if np.isscalar(seeds):
        return np.array([int(seeds)], dtype=np.int64)
    return np.asarray(seeds, dtype=np.int64)


def joint_cfg_eps(system, state, schedule, lam) -> NoisePrediction:
    cond = exact_epsilon(system, JOINT, state.x, schedule, state.t)
    unc = exact_epsilon(system, UNCOND, state.x, schedule, state.t)
    return cfg_compose(cond, unc, lam)


def composable_eps(system, state, schedule, lambdas) -> NoisePrediction:
    """eps_phi + sum_k lam_k (eps_k - eps_phi); the joint prompt is not used.

    Accumulated as (1 - sum lam_k) eps_phi + sum lam_k eps_k, which for K=1
    matches :func:`cfg_compose` bit for bit.
    """
    if len(lambdas) != system.num_concepts:
        raise ValueError(f"{len(lambdas)} lambdas for {system.num_concepts} concepts")
    unc = exact_epsilon(system, UNCOND, state.x, schedule, state.t).epsilon
    terms = [lam_k * exact_epsilon(system, k, state.x, schedule, state.t).epsilon for k, lam_k in enumerate(lambdas, start=1)]
    eps = terms[0] + (1.0 - float(sum(lambdas))) * unc
    for term in terms[1:]:
        eps = eps + term
    return NoisePrediction(eps, "composed", state.t)


def _check_T(config: SamplerConfig, schedule: NoiseSchedule):
    if config.num_steps != schedule.num_steps:
        raise ValueError(
            f"config asks for T={config.num_steps} but schedule has {schedule.num_steps} steps"
        )


def run_with_phases(
    system: ConceptSystem,
    schedule: NoiseSchedule,
    config: SamplerConfig,
    seeds,
    phases: Dict[int, str],
) -> Trajectory:
    """DDIM with joint CFG, applying P resample/correct iterations where ``phases`` says.

    After correcting at step t, the DDIM noise is recomputed at the corrected
    latent.
    """
    seeds = _as_seeds(seeds)
    state = LatentState(initial_noise(seeds, system.joint.dim), schedule.num_steps)
    states = [state]
    for t in range(schedule.num_steps, 0, -1):
        phase = phases.get(t, sched.PLAIN)
        if phase == sched.RESAMPLE:
            for _ in range(config.num_iters):
                state = resample_step(state, system, schedule, config.lam, config.resampler_modulation)
        elif phase == sched.CORRECT:
            for _ in range(config.num_iters):
                state = correct_step(
                    state, system, schedule, config.lam, config.corrector_modulation, skip_degenerate=True
                )
        state = ddim_step(state, joint_cfg_eps(system, state, schedule, config.lam), schedule)
        states.append(state)
    full = {t: phases.get(t, sched.PLAIN) for t in range(schedule.num_steps, 0, -1)}
    return Trajectory(states, full, seeds)


def run_plain_cfg(system, schedule, config: SamplerConfig, seeds) -> Trajectory:
    """Baseline: joint-prompt CFG followed by DDIM at every step."""
    _check_T(config, schedule)
    return run_with_phases(system, schedule, config, seeds, {})


def run_composable_diffusion(system, schedule, config: SamplerConfig, seeds) -> Trajectory:
    _check_T(config, schedule)
    if config.composable_lambdas is None:
        raise ValueError("composable_lambdas required")
    seeds = _as_seeds(seeds)
    state = LatentState(initial_noise(seeds, system.joint.dim), schedule.num_steps)
    states = [state]
    for _ in range(schedule.num_steps):
        state = ddim_step(state, composable_eps(system, state, schedule, config.composable_lambdas), schedule)
        states.append(state)
    phases = {t: sched.PLAIN for t in range(schedule.num_steps, 0, -1)}
    return Trajectory(states, phases, seeds)


def run_co3(system, schedule, config: SamplerConfig, seeds) -> Trajectory:
    """Resample for the first T_r steps, correct until T_c steps, then plain DDIM."""
    _check_T(config, schedule)
    phases = sched.timestep_partition(schedule, config.num_resampling, config.num_correct)
    return run_with_phases(system, schedule, config, seeds, phases)


_RUNNERS = {PLAIN_CFG: run_plain_cfg, COMPOSABLE: run_composable_diffusion, CO3: run_co3}


def run(system, schedule, config: SamplerConfig, seeds) -> Trajectory:
    return _RUNNERS[config.method](system, schedule, config, seeds)


@dataclass
class SweepRow:
    config_index: int
    config: SamplerConfig
    seeds: np.ndarray
    samples: np.ndarray
    report: "object"


def sweep(
    configs: Sequence[SamplerConfig],
    system: ConceptSystem,
    schedule: NoiseSchedule,
    replicates: int,
    radius: float = 3.0,
) -> List[SweepRow]:
    """Run every config over ``replicates`` seeded chains and score the endpoints.

    Chain seeds are ``config.seed + i``; rows come back in config order.
    """
    from .evaluation import assign_modes

    if not configs:
        raise ValueError("sweep needs at least one config")
    rows = []
    for i, cfg in enumerate(configs):
        seeds = chain_seeds(cfg.seed, replicates)
        traj = run(system, schedule, cfg, seeds)
        _, report = assign_modes(traj.terminal, system, radius)
        log.info("%s: degenerate fraction %.4f", cfg.label(), report.degenerate_fraction)
        rows.append(SweepRow(i, cfg, seeds, traj.terminal, report))
    return rows


def ablation_grid(base: Optional[SamplerConfig] = None) -> Dict[str, List[SamplerConfig]]:
    """Hyperparameter grids mirroring the published ablation tables."""
    base = base or SamplerConfig()
    return {
        "beta": [replace(base, beta=b) for b in (0.3, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1)],
        "num_correct": [replace(base, num_correct=n) for n in (4, 6, 7, 10)],
        "num_resampling": [replace(base, num_resampling=n) for n in (3, 4)],
        "num_iters": [replace(base, num_iters=p) for p in (7, 10, 15)],
    }
