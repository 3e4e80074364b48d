"""
When does each phase matter
===========================

Apply a single resampler or corrector phase at one timestep and measure
the degenerate fraction at the end. The cumulative curve corrects every
step from T down to t.
"""

import numpy as np

from co3lab import four_mode_system, default_schedule
from co3lab.evaluation import phase_effect_curve
from co3lab.pipeline import SamplerConfig

system = four_mode_system()
schedule = default_schedule(50)
grid = list(range(50, 0, -5))
curves = phase_effect_curve(system, schedule, SamplerConfig(), grid, num_chains=2000)

print(f"baseline (no correction): {curves.baseline:.3f}")
print("   t  resample  correct  cumulative")
for row in zip(curves.timesteps, curves.resample, curves.correct, curves.cumulative_correct):
    print("{:4d}  {:8.3f}  {:7.3f}  {:10.3f}".format(*row))
