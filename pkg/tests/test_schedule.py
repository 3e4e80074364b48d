import numpy as np
import pytest
from hypothesis import given, strategies as st

from co3lab.schedule import (
    CORRECT, PLAIN, RESAMPLE, NoiseSchedule, build_linear_schedule, build_scaled_linear_schedule,
    fraction_to_steps, phase_counts, subsample_schedule, timestep_partition,
)

# mpmath product of (1 - beta_i) at 40 digits, beta linear 1e-4 -> 0.02 over 50 steps
ALPHA_BAR_50_GOLDEN = 0.6029515973297149


def test_single_step():
    s = build_linear_schedule(1, 1e-4, 1e-4)
    assert s.alpha_bar[1] == pytest.approx(0.9999, abs=1e-15)
    assert s.alpha_bar[0] == 1.0


def test_constant_beta_is_geometric():
    s = build_linear_schedule(20, 0.05, 0.05)
    np.testing.assert_allclose(s.alpha_bar, 0.95 ** np.arange(21), rtol=1e-13)


def test_golden_alpha_bar():
    assert build_linear_schedule(50, 1e-4, 0.02).alpha_bar[50] == pytest.approx(ALPHA_BAR_50_GOLDEN, rel=1e-13)


@pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_bad_bounds(args):
    with pytest.raises(ValueError):
        build_linear_schedule(*args)


def test_invariants_rejected():
    with pytest.raises(ValueError):
        NoiseSchedule(np.array([0.99, 0.5]))
    with pytest.raises(ValueError):
        NoiseSchedule(np.array([1.0, 0.5, 0.6]))


# sigma saturates at 1.0 in double precision once alpha_bar drops below ~1e-16
@given(st.integers(1, 100), st.floats(1e-5, 0.05), st.floats(0.0, 0.05))
def test_monotone_and_sigma(T, b0, span):
    s = build_linear_schedule(T, b0, b0 + span)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all(np.diff(s.sigma) > 0)
    np.testing.assert_array_equal(s.sigma, np.sqrt(1 - s.alpha_bar))


def test_scaled_linear_and_subsample():
    base = build_scaled_linear_schedule(1000, 0.00085, 0.012)
    sub = subsample_schedule(base, 50)
    assert sub.num_steps == 50
    assert sub.alpha_bar[-1] == base.alpha_bar[-1]
    assert sub.alpha_bar[1] == base.alpha_bar[20]


def test_default_partition():
    s = build_linear_schedule(50, 1e-4, 0.02)
    ph = timestep_partition(s, 3, 10)
    assert [ph[t] for t in (50, 49, 48)] == [RESAMPLE] * 3
    assert all(ph[t] == CORRECT for t in range(47, 40, -1))
    assert all(ph[t] == PLAIN for t in range(40, 0, -1))
    assert phase_counts(ph) == {RESAMPLE: 3, CORRECT: 7, PLAIN: 40}


def test_partition_edges():
    s50 = build_linear_schedule(50, 1e-4, 0.02)
    assert phase_counts(timestep_partition(s50, 0, 0)) == {RESAMPLE: 0, CORRECT: 0, PLAIN: 50}
    s10 = build_linear_schedule(10, 1e-4, 0.02)
    assert phase_counts(timestep_partition(s10, 10, 10)) == {RESAMPLE: 10, CORRECT: 0, PLAIN: 0}
    with pytest.raises(ValueError):
        timestep_partition(s10, 4, 3)
    with pytest.raises(ValueError):
        timestep_partition(s10, 0, 11)


@given(st.integers(1, 80), st.data())
def test_partition_covers(T, data):
    s = build_linear_schedule(T, 1e-4, 0.02)
    tc = data.draw(st.integers(0, T))
    tr = data.draw(st.integers(0, tc))
    ph = timestep_partition(s, tr, tc)
    assert sorted(ph) == list(range(1, T + 1))
    c = phase_counts(ph)
    assert (c[RESAMPLE], c[CORRECT], c[PLAIN]) == (tr, tc - tr, T - tc)


def test_fraction_to_steps():
    assert fraction_to_steps(0.2, 50) == 10
    assert fraction_to_steps(0.75, 50) == 37
