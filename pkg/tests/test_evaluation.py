import numpy as np
import pytest

from co3lab.evaluation import (
    RunReport, UnboundedDensityError, assign_modes, oracle_corrector_sample, phase_effect_curve,
)
from co3lab.oracle import sample_clean
from co3lab.pipeline import SamplerConfig, chain_seeds, run_plain_cfg


def test_pure_centres(toy):
    pure = toy.joint.means[~toy.degenerate_mask]
    assignments, r = assign_modes(np.repeat(pure, 5, 0), toy)
    assert r.pure_fraction == 1.0
    assert all(a.tag == "pure" for a in assignments)


def test_far_samples_unassigned(toy):
    _, r = assign_modes(np.full((10, 2), 100.0), toy, radius=3.0)
    assert r.unassigned_fraction == 1.0
    with pytest.raises(ValueError):
        assign_modes(np.zeros((1, 2)), toy, radius=0.0)


def test_fractions_match_weights(toy):
    n = 10_000
    _, r = assign_modes(sample_clean(toy.joint, n, 11), toy)
    counts = np.asarray(r.per_mode_counts) / n
    se = np.sqrt(0.25 * 0.75 / n)
    assert np.all(np.abs(counts - 0.25) < 3 * se + 0.003)
    assert abs(r.degenerate_fraction - 0.5) < 3 * np.sqrt(0.25 / n) + 0.003


def test_permutation_invariance(toy):
    x = np.random.default_rng(0).normal(scale=2.5, size=(300, 2))
    _, a = assign_modes(x, toy)
    _, b = assign_modes(x[np.random.default_rng(1).permutation(300)], toy)
    assert a.per_mode_counts == b.per_mode_counts
    assert a.degenerate_fraction == b.degenerate_fraction
    assert a.mean_min_concept_distance == pytest.approx(b.mean_min_concept_distance, rel=1e-12)


def test_report_invariants():
    with pytest.raises(ValueError):
        RunReport(0.5, 0.6, 0.0, (1,), 0.0, 1)


def test_oracle_reduces_to_joint(toy):
    n = 10_000
    x = oracle_corrector_sample(toy, np.array([1.0, 0.0, 0.0]), n, 3, 512)
    _, r = assign_modes(x, toy)
    counts = np.asarray(r.per_mode_counts) / n
    # 3 SE plus a small allowance for mass beyond the radius
    assert np.all(np.abs(counts - 0.25) < 3 * np.sqrt(0.25 * 0.75 / n) + 0.005)


def test_oracle_matches_clean_sampler_two_sample(toy):
    from scipy.stats import ks_2samp

    x = oracle_corrector_sample(toy, np.array([1.0, 0.0, 0.0]), 4000, 5, 512)
    y = sample_clean(toy.joint, 4000, 6)
    for axis in (0, 1):
        assert ks_2samp(x[:, axis], y[:, axis]).pvalue > 1e-3


def test_oracle_suppresses_degenerate(toy):
    x = oracle_corrector_sample(toy, np.array([2.0, -0.5, -0.5]), 10_000, 4, 512)
    joint = sample_clean(toy.joint, 10_000, 4)
    assert assign_modes(x, toy)[1].degenerate_fraction < assign_modes(joint, toy)[1].degenerate_fraction


def test_oracle_grid_refinement(toy):
    w = np.array([2.0, -0.5, -0.5])
    a = assign_modes(oracle_corrector_sample(toy, w, 20_000, 8, 512), toy)[1]
    b = assign_modes(oracle_corrector_sample(toy, w, 20_000, 8, 1024), toy)[1]
    assert abs(a.degenerate_fraction - b.degenerate_fraction) < 0.01
    assert abs(a.pure_fraction - b.pure_fraction) < 0.01


def test_oracle_unbounded(toy):
    # all weight on dividing by a single sharp concept mode pushes mass to the box edge
    from co3lab.oracle import ConceptSystem, GaussianMixture

    sharp = ConceptSystem(toy.joint, (GaussianMixture.gaussian([-2.0, 0.0], 0.3 * np.eye(2)),), toy.unconditional, ("pure",) * 4)
    with pytest.raises(UnboundedDensityError):
        oracle_corrector_sample(sharp, np.array([1.0, -1.0]), 10, 0, 128)


def test_phase_curve_baseline(toy, schedule):
    cfg = SamplerConfig()
    curves = phase_effect_curve(toy, schedule, cfg, [50, 40], num_chains=300, cumulative=False)
    plain = run_plain_cfg(toy, schedule, SamplerConfig(method="plain_cfg"), chain_seeds(cfg.seed, 300)).terminal
    assert curves.baseline == assign_modes(plain, toy)[1].degenerate_fraction
    assert len(curves.resample) == len(curves.correct) == 2


def test_concept_distance_ignores_shared_background(toy):
    _, r = assign_modes(np.zeros((4, 2)), toy)
    assert r.mean_min_concept_distance == pytest.approx(2.0)
