"""Concept-contrasting (CO3) diffusion sampling on analytic 2D concept mixtures."""
from .co3 import (
    CompositionWeights,
    DegenerateCompositionError,
    ModulationConfig,
    compose_tweedie,
    correct_step,
    corrector_log_density,
    unit_sum_residual,
    zero_sum_residual,
    modulate_weights,
    resample_step,
)
from .evaluation import RunReport, assign_modes, oracle_corrector_sample, phase_effect_curve
from .guidance import LatentState, cfg_compose, ddim_step, tweedie_mean
from .oracle import ConceptSystem, GaussianMixture, NoisePrediction, exact_epsilon, four_mode_system, log_density, noised_marginal, sample_clean
from .pipeline import SamplerConfig, run_co3, run_composable_diffusion, run_plain_cfg, sweep
from .schedule import NoiseSchedule, build_linear_schedule, default_schedule, timestep_partition

__version__ = "0.1.0"
