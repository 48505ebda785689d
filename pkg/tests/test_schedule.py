import math

import numpy as np
import pytest

from astn.schedule import make_linear_schedule, make_timestep_grid

# cumulative product of (1 - beta_t) for the default schedule, computed with
# mpmath at 60 decimal digits (frozen golden constant)
ALPHA_BAR_1000_GOLDEN = 4.035829765375683e-05


def test_linear_schedule_shapes(sched):
    assert sched.T == 1000
    assert sched.betas.shape == (1000,)
    assert sched.alpha_bars.shape == (1001,)
    assert sched.betas[0] == 1e-4 and sched.betas[-1] == 0.02


def test_single_step_schedule():
    s = make_linear_schedule(1, beta_start=0.5, beta_end=0.5)
    assert np.allclose(s.alpha_bars, [1.0, 0.5])


def test_alpha_bar_golden_constant(sched):
    assert sched.alpha_bar(1000) == pytest.approx(ALPHA_BAR_1000_GOLDEN, rel=1e-13)


def test_alpha_bar_golden_against_mpmath(sched):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 60
    bs, be = mpmath.mpf("1e-4"), mpmath.mpf("0.02")
    prod = mpmath.mpf(1)
    for i in range(1000):
        prod *= 1 - (bs + (be - bs) * mpmath.mpf(i) / 999)
    assert float(prod) == pytest.approx(ALPHA_BAR_1000_GOLDEN, rel=1e-14)


def test_alpha_bar_endpoints(sched):
    assert sched.alpha_bar(0) == 1.0
    assert sched.alpha_bar(1) == pytest.approx(1.0 - 1e-4, abs=1e-15)


def test_alpha_bar_matches_direct_product():
    s = make_linear_schedule(200, 5e-4, 0.03)
    prod = 1.0
    for beta in s.betas:
        prod *= 1.0 - beta
    assert s.alpha_bar(200) == pytest.approx(prod, rel=1e-12)


def test_alpha_bar_range_errors(sched):
    with pytest.raises(ValueError):
        sched.alpha_bar(-1)
    with pytest.raises(ValueError):
        sched.alpha_bar(1001)


def test_monotonicity(sched, sched_small):
    for s in (sched, sched_small):
        assert (np.diff(s.alpha_bars) < 0).all()


def test_recurrence_consistency(sched):
    ratio = sched.alpha_bars[1:] / sched.alpha_bars[:-1]
    eps = np.finfo(np.float64).eps
    assert np.abs(ratio - sched.alphas).max() <= 4 * eps


def test_schedule_domain_errors():
    with pytest.raises(ValueError):
        make_linear_schedule(0)
    with pytest.raises(ValueError):
        make_linear_schedule(10, beta_start=0.0)
    with pytest.raises(ValueError):
        make_linear_schedule(10, beta_start=0.5, beta_end=1.0)
    with pytest.raises(ValueError):
        make_linear_schedule(10, beta_start=0.3, beta_end=0.2)


def test_log_snr_interpolation(sched):
    lam500 = sched.log_snr(500)
    ab500 = sched.alpha_bar(500)
    assert lam500 == pytest.approx(0.5 * math.log(ab500 / (1 - ab500)), rel=1e-12)
    # fractional points sit between the neighbouring integer values
    assert sched.log_snr(501) < sched.log_snr(500.5) < lam500
    with pytest.raises(ValueError):
        sched.log_snr(0)


def test_alpha_bar_at_fractional(sched):
    assert sched.alpha_bar_at(500) == sched.alpha_bar(500)
    mid = sched.alpha_bar_at(500.5)
    assert sched.alpha_bar(501) < mid < sched.alpha_bar(500)


def test_grid_dense_full():
    g = make_timestep_grid(1000, 1000, 1000)
    assert g.steps == tuple(range(1000, 0, -1))


def test_grid_ast150_dense():
    g = make_timestep_grid(150, 150, 1000)
    assert g.steps == tuple(range(150, 0, -1))
    assert g.origin == 150


def test_grid_sparse_spacing():
    g = make_timestep_grid(1000, 4, 1000)
    assert len(g) == 4
    assert g.steps[0] == 1000
    assert g.steps[-1] <= math.ceil(1000 / 4)
    gaps = -np.diff(np.asarray(g.steps))
    ideal = (1000 - 1) / 3
    assert np.abs(gaps - ideal).max() <= 1.0


def test_grid_cardinality_property():
    rng = np.random.default_rng(7)
    for _ in range(300):
        T = int(rng.integers(1, 400))
        origin = int(rng.integers(1, T + 1))
        N = int(rng.integers(1, origin + 1))
        g = make_timestep_grid(origin, N, T)
        steps = np.asarray(g.steps)
        assert len(g) == N
        assert steps[0] == origin
        assert (np.diff(steps) < 0).all()
        assert steps[-1] >= 1


def test_grid_domain_errors():
    with pytest.raises(ValueError):
        make_timestep_grid(10, 11, 1000)
    with pytest.raises(ValueError):
        make_timestep_grid(1001, 5, 1000)
    with pytest.raises(ValueError):
        make_timestep_grid(10, 5, 1000, strategy="quadratic")
