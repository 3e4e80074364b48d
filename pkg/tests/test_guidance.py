import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from co3lab.guidance import GuidanceConfig, LatentState, cfg_compose, ddim_step, tweedie_mean
from co3lab.oracle import NoisePrediction, exact_epsilon
from co3lab.schedule import NoiseSchedule
from co3lab.pipeline import SamplerConfig, chain_seeds, run_plain_cfg
from conftest import single_gaussian_system

vec = arrays(np.float64, 2, elements=st.floats(-10, 10))


def eps(v, t=5, cond="joint"):
    return NoisePrediction(np.asarray(v, dtype=float), cond, t)


def test_cfg_examples():
    a, b = eps([0.4, 0.0]), eps([0.2, 0.0])
    np.testing.assert_array_equal(cfg_compose(a, b, 1.0).epsilon, a.epsilon)
    np.testing.assert_allclose(cfg_compose(a, a, 7.3).epsilon, a.epsilon, atol=1e-15)
    np.testing.assert_allclose(cfg_compose(a, b, 5.0).epsilon, [1.2, 0.0], atol=1e-15)


def test_cfg_timestep_mismatch():
    with pytest.raises(ValueError):
        cfg_compose(eps([1, 0], 3), eps([1, 0], 4), 2.0)


def test_guidance_config():
    assert GuidanceConfig().lam == 5.0
    with pytest.raises(ValueError):
        GuidanceConfig(0.5)


@given(vec, vec, st.floats(1, 10))
def test_cfg_affine(a, b, lam):
    out = cfg_compose(eps(a), eps(b), lam).epsilon
    np.testing.assert_allclose(out - b, lam * (a - b), atol=1e-9)


def _one_step_schedule(sigma):
    return NoiseSchedule(np.array([1.0, 1.0 - sigma**2]))


def test_tweedie_zero_eps_and_harness():
    s = _one_step_schedule(0.5)
    st_ = LatentState(np.array([1.0]), 1)
    np.testing.assert_array_equal(tweedie_mean(st_, eps([0.0], 1), s), [1.0])
    composed = cfg_compose(eps([0.4], 1), eps([0.0], 1), 2.0)
    np.testing.assert_allclose(tweedie_mean(st_, composed, s), [0.6], atol=1e-15)


@given(vec, vec, st.floats(0.01, 0.99))
def test_tweedie_inversion(x, e, sigma):
    s = _one_step_schedule(sigma)
    tw = tweedie_mean(LatentState(x, 1), eps(e, 1), s)
    np.testing.assert_allclose(tw + s.sigma_at(1) * e, x, atol=1e-9)


def test_tweedie_posterior_mean(schedule):
    mu = np.array([0.7, -1.2])
    cov = np.array([[0.5, 0.15], [0.15, 0.35]])
    sys_ = single_gaussian_system(mu, cov)
    rng = np.random.default_rng(2)
    for _ in range(50):
        t = int(rng.integers(1, 51))
        ab = schedule.alpha_bar[t]
        x = rng.normal(size=2)
        e = exact_epsilon(sys_, "joint", x, schedule, t)
        got = tweedie_mean(LatentState(x, t), e, schedule) / np.sqrt(ab)
        # conjugate Gaussian posterior E[x0 | x_t]
        gain = np.sqrt(ab) * cov @ np.linalg.inv(ab * cov + (1 - ab) * np.eye(2))
        want = mu + gain @ (x - np.sqrt(ab) * mu)
        np.testing.assert_allclose(got, want, atol=1e-8)


def test_ddim_final_step_and_stationary():
    s = _one_step_schedule(0.6)
    st_ = LatentState(np.array([0.3, -0.4]), 1)
    e = eps([0.5, 0.1], 1)
    out = ddim_step(st_, e, s)
    assert out.t == 0
    np.testing.assert_allclose(out.x, tweedie_mean(st_, e, s) / np.sqrt(s.alpha_bar[1]), atol=1e-15)

    class Flat:
        alpha_bar = np.array([1.0, 0.5, 0.5])

        def sigma_at(self, t):
            return float(np.sqrt(1 - self.alpha_bar[t]))

    x = np.array([1.5, 2.0])
    np.testing.assert_allclose(ddim_step(LatentState(x, 2), eps([0.0, 0.0], 2), Flat()).x, x)


def test_ddim_rejects_t0():
    with pytest.raises(ValueError):
        ddim_step(LatentState(np.zeros(2), 0), eps([0, 0], 0), _one_step_schedule(0.5))


def test_ddim_chain_recovers_gaussian(linear_schedule):
    mu = np.array([1.0, -0.5])
    cov = np.array([[1.0, 0.3], [0.3, 0.8]])
    sys_ = single_gaussian_system(mu, cov)
    cfg = SamplerConfig(method="plain_cfg", lam=1.0)
    x = run_plain_cfg(sys_, linear_schedule, cfg, chain_seeds(0, 10_000)).terminal
    assert np.abs(x.mean(0) - mu).max() < 0.05
    assert np.linalg.norm(np.cov(x.T) - cov) / np.linalg.norm(cov) < 0.10


def test_ddim_error_shrinks_with_steps():
    from co3lab.schedule import build_linear_schedule, subsample_schedule

    sys_ = single_gaussian_system([0.0, 0.0], 0.3 * np.eye(2))
    base = build_linear_schedule(1000, 1e-4, 0.02)
    errs = []
    for T in (25, 50, 200):
        cfg = SamplerConfig(method="plain_cfg", lam=1.0, num_steps=T, num_resampling=0, num_correct=0)
        x = run_plain_cfg(sys_, subsample_schedule(base, T), cfg, chain_seeds(0, 4000)).terminal
        errs.append(np.linalg.norm(np.cov(x.T) - 0.3 * np.eye(2)))
    assert errs[0] > errs[1] > errs[2]
