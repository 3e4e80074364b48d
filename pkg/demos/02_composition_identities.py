"""
Why the weights must sum to one or zero
=======================================

Composing guided Tweedie means with weights that sum to one gives back
another guided mean. With weights summing to zero the current latent
cancels out entirely, leaving a pure noise-space direction.
"""

import numpy as np

from co3lab.co3 import unit_sum_residual, zero_sum_residual, modulation_from_distances, resample_update

rng = np.random.default_rng(0)
x = rng.normal(size=2) * 3
sigma, lam = 0.7, 5.0
eps_u = rng.normal(size=2)
eps = [rng.normal(size=2) for _ in range(3)]

# Unit sum: the residual against the single-guidance form is rounding noise.
for w in ([2.0, -0.5, -0.5], [2.1, -0.5, -0.5]):
    print("sum", sum(w), "residual", unit_sum_residual(x, sigma, lam, eps_u, eps, np.array(w)))

# Zero sum: the composed mean no longer depends on x.
w = np.array([1.0, -0.6, -0.4])
print("zero-sum residual", zero_sum_residual(x, sigma, lam, eps_u, eps, w))
a, _ = resample_update(x, sigma, lam, eps, eps_u, w)
b, _ = resample_update(x + 100.0, sigma, lam, eps, eps_u, w)
print("x-independent:", np.array_equal(a, b))

# Closeness modulation: the concept closest to the joint is penalised most.
print("weights for distances (1, 2):", modulation_from_distances(np.array([1.0, 2.0]), 0.8))
