from dataclasses import replace

import numpy as np
import pytest

from co3lab.evaluation import assign_modes
from co3lab.oracle import ConceptSystem
from co3lab.pipeline import (
    SamplerConfig, ablation_grid, chain_seeds, run, run_co3, run_composable_diffusion, run_plain_cfg, sweep,
)
from co3lab.schedule import timestep_partition
from conftest import single_gaussian_system

SEEDS = chain_seeds(100, 500)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(num_resampling=5, num_correct=3)
    with pytest.raises(ValueError):
        SamplerConfig(method="composable_diffusion")
    with pytest.raises(ValueError):
        SamplerConfig(lam=0.5)
    with pytest.raises(ValueError):
        SamplerConfig(method="ddpm")


def test_schedule_length_mismatch(toy, schedule):
    with pytest.raises(ValueError):
        run_plain_cfg(toy, schedule, SamplerConfig(method="plain_cfg", num_steps=40, num_correct=5), SEEDS)


def test_plain_cfg_deterministic(toy, schedule):
    cfg = SamplerConfig(method="plain_cfg")
    a = run_plain_cfg(toy, schedule, cfg, SEEDS)
    b = run_plain_cfg(toy, schedule, cfg, SEEDS)
    for sa, sb in zip(a.states, b.states):
        np.testing.assert_array_equal(sa.x, sb.x)
    assert [s.t for s in a.states] == list(range(50, -1, -1))


def test_chains_independent_of_batch(toy, schedule):
    cfg = SamplerConfig()
    full = run_co3(toy, schedule, cfg, SEEDS[:40]).terminal
    alone = run_co3(toy, schedule, cfg, SEEDS[7:8]).terminal
    np.testing.assert_allclose(alone[0], full[7], rtol=1e-12)


def test_plain_cfg_unit_guidance_single_gaussian(linear_schedule):
    sys_ = single_gaussian_system([0.8, 0.4], [[0.9, 0.1], [0.1, 0.7]])
    x = run_plain_cfg(sys_, linear_schedule, SamplerConfig(method="plain_cfg", lam=1.0), chain_seeds(0, 10_000)).terminal
    assert np.abs(x.mean(0) - [0.8, 0.4]).max() < 0.05


def test_plain_cfg_hits_degenerate_modes(toy, schedule):
    x = run_plain_cfg(toy, schedule, SamplerConfig(method="plain_cfg"), chain_seeds(0, 2000)).terminal
    assert assign_modes(x, toy)[1].degenerate_fraction > 0.3


def test_composable_single_concept_equals_cfg(toy, schedule):
    lam = 5.0
    only_c1 = ConceptSystem(toy.concepts[0], toy.concepts[:1], toy.unconditional, ("pure",) * toy.concepts[0].num_components)
    comp = run_composable_diffusion(only_c1, schedule, SamplerConfig(method="composable_diffusion", composable_lambdas=(lam,)), SEEDS)
    cfg = run_plain_cfg(only_c1, schedule, SamplerConfig(method="plain_cfg", lam=lam), SEEDS)
    for a, b in zip(comp.states, cfg.states):
        np.testing.assert_array_equal(a.x, b.x)


def test_composable_zero_lambdas_is_unconditional(toy, schedule):
    uncond_sys = ConceptSystem(toy.unconditional, toy.concepts, toy.unconditional, ("pure",))
    comp = run_composable_diffusion(toy, schedule, SamplerConfig(method="composable_diffusion", composable_lambdas=(0.0, 0.0), lam=1.0), SEEDS)
    unc = run_plain_cfg(uncond_sys, schedule, SamplerConfig(method="plain_cfg", lam=1.0), SEEDS)
    np.testing.assert_array_equal(comp.terminal, unc.terminal)


def test_composable_runs_on_toy(toy, schedule):
    rows = sweep([SamplerConfig(method="composable_diffusion", composable_lambdas=(5.0, 5.0))], toy, schedule, 500)
    r = rows[0].report
    assert 0.0 <= r.degenerate_fraction <= 1.0


def test_co3_without_correction_is_plain(toy, schedule):
    co3 = run_co3(toy, schedule, SamplerConfig(num_resampling=0, num_correct=0), SEEDS)
    plain = run_plain_cfg(toy, schedule, SamplerConfig(method="plain_cfg"), SEEDS)
    for a, b in zip(co3.states, plain.states):
        np.testing.assert_array_equal(a.x, b.x)


@pytest.mark.parametrize("tr,tc", [(3, 10), (0, 10), (3, 3), (2, 4)])
def test_phase_tags(toy, schedule, tr, tc):
    traj = run_co3(toy, schedule, SamplerConfig(num_resampling=tr, num_correct=tc), SEEDS[:5])
    assert traj.phases == timestep_partition(schedule, tr, tc)
    assert len(traj.states) == schedule.num_steps + 1


def test_sweep_single_row_matches_run(toy, schedule):
    cfg = SamplerConfig(seed=42)
    rows = sweep([cfg], toy, schedule, 1)
    assert len(rows) == 1
    np.testing.assert_array_equal(rows[0].samples, run(toy, schedule, cfg, [42]).terminal)


def test_beta_sweep_reproducible(toy, schedule):
    cfgs = [SamplerConfig(beta=b) for b in (0.3, 0.8, 1.1)]
    a = sweep(cfgs, toy, schedule, 200)
    b = sweep(cfgs, toy, schedule, 200)
    assert len(a) == 3
    assert [r.report for r in a] == [r.report for r in b]


def test_ablation_grid_shapes():
    g = ablation_grid()
    assert [c.beta for c in g["beta"]] == [0.3, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1]
    assert [c.num_correct for c in g["num_correct"]] == [4, 6, 7, 10]
    assert [c.num_resampling for c in g["num_resampling"]] == [3, 4]
    assert [c.num_iters for c in g["num_iters"]] == [7, 10, 15]
