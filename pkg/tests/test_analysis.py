import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from dyntrack.algorithms import run_population, run_single
from dyntrack.analysis import (
    LOSS_PROBABILITY_FLOOR,
    drift_constants,
    drift_estimate,
    drift_samples,
    dynamic_drift,
    loss_events,
    loss_probability_bound,
    occupancy_bound_at_time,
    occupancy_fraction,
    ruin_exact_system,
    ruin_probability_closed,
    ruin_probability_exact,
    simulate_ruin_walk,
    tracking_score,
)
from dyntrack.dynamics import MhbInstance, MhbParams
from dyntrack.operators import MutationOp, SelectionSpec
from dyntrack.stats import binomial_sigma


# tracking ----------------------------------------------------------------


def test_tracking_extremes():
    rep = tracking_score(np.ones(100, dtype=bool), 10)
    assert rep.min_fraction == rep.max_fraction == 1.0
    rep = tracking_score(np.zeros(100, dtype=bool), 10, threshold=0.25)
    assert rep.min_fraction == 0.0 and rep.tracks is False


def test_tracking_window_arithmetic():
    hits = np.array([1, 0, 0, 1, 1, 1, 0, 0], dtype=bool)
    rep = tracking_score(hits, 4, start=2)
    assert rep.fractions.tolist() == [0.75, 0.75, 0.5]
    with pytest.raises(ValueError):
        tracking_score(hits, 8, start=1)


@given(st.lists(st.booleans(), min_size=5, max_size=200), st.integers(1, 5))
def test_tracking_fraction_ordering(hits, window):
    rep = tracking_score(np.array(hits), window)
    f = rep.fractions
    assert np.all((0 <= f) & (f <= 1))
    assert rep.min_fraction <= rep.mean_fraction + 1e-12
    assert rep.mean_fraction <= rep.max_fraction + 1e-12


def test_tracking_with_generation_windows():
    F = MhbInstance(MhbParams.from_fraction(60, 0.1, 1, 1e15), np.random.default_rng(0))
    tr = run_population(F, 30, SelectionSpec.tournament(10), MutationOp.bitwise(), 3000, np.random.default_rng(1))
    gamma0 = 0.5
    rep = tracking_score(tr, window=30, start=30, threshold=gamma0 / 2)
    assert rep.window == rep.start == 30 and rep.threshold == 0.25
    assert rep.fractions.size == 3000 - 60 + 1


# drift -------------------------------------------------------------------


def test_drift_constants():
    delta, eta = drift_constants(0.1)
    assert delta == pytest.approx(0.9 / (2 * math.e))
    assert eta == pytest.approx(0.1)
    delta, _ = drift_constants(0.05)
    assert delta == pytest.approx(0.174743, abs=1e-6)


def test_dynamic_drift_matches_hypergeometric_mean():
    n, h, ell = 40, 7, 3
    z = np.arange(ell + 1)
    mean_z = float(np.sum(z * stats.hypergeom.pmf(z, n, h, ell)))
    assert dynamic_drift(n, h, ell) == pytest.approx(ell - 2 * mean_z)


def test_drift_estimates_against_constants():
    p = MhbParams.from_fraction(200, 0.05, 1, 1e15)
    rng = np.random.default_rng(6)
    for i in range(0, 4):
        est = drift_estimate(p, MutationOp.bitwise(), i, 20000, rng)
        assert est.mean >= est.bound - 3 * est.sigma
    assert drift_estimate(p, MutationOp.bitwise(), 0, 100, rng).bound == pytest.approx(-0.05)


def test_drift_dominates_one_flip_drift():
    p = MhbParams.from_fraction(200, 0.05, 1, 1e15)
    d, d1 = drift_samples(p, MutationOp.bitwise(), 3, 20000, np.random.default_rng(8))
    assert np.all(d >= d1)
    with pytest.raises(ValueError):
        drift_samples(p, MutationOp.bitwise(), 11, 10, np.random.default_rng())


# occupancy ---------------------------------------------------------------


def synthetic_chain(steps, rng):
    """Walk on 0, 1, 2, ...: from i > 0 down w.p. 3/4, up w.p. 1/4; from 0 up w.p. 1/2."""
    u = rng.random(steps)
    x = np.empty(steps, dtype=np.int64)
    s = 0
    for t in range(steps):
        x[t] = s
        if s == 0:
            s = 1 if u[t] < 0.5 else 0
        else:
            s = s - 1 if u[t] < 0.75 else s + 1
    return x


def test_occupancy_synthetic_chain():
    x = synthetic_chain(10**6, np.random.default_rng(11))
    frac, bound = occupancy_fraction(x, 0.5, 0.5)
    assert bound == pytest.approx(0.5)
    # batch means for the standard error of a correlated sequence
    batches = (x == 0).reshape(1000, -1).mean(axis=1)
    sigma = batches.std(ddof=1) / math.sqrt(batches.size)
    assert frac >= bound - 3 * sigma


def test_occupancy_trivial_cases():
    assert occupancy_fraction(np.zeros(50), 0.3, 0.1)[0] == 1.0
    frac, bound = occupancy_fraction(np.array([4, 3, 2, 1, 0, 0]), 1.0, 1.0)
    assert frac == pytest.approx(1 / 3) and bound == pytest.approx((6 - 4) / 12)
    with pytest.raises(ValueError):
        occupancy_fraction([], 0.5, 0.5)


def test_occupancy_bound_value():
    delta, eta = drift_constants(0.1)
    bound = occupancy_bound_at_time(delta, eta)
    assert bound == pytest.approx(delta / (2 * (delta + eta)))
    assert bound == pytest.approx(0.31170, abs=5e-5)


# re-entry probability ----------------------------------------------------


def test_ruin_examples():
    assert ruin_probability_closed(1, 2, 10, 2) == pytest.approx(0.2)
    assert ruin_probability_exact(1, 2, 10, 2) == pytest.approx(0.2)
    assert ruin_probability_exact(1, 2, 4, 2) == pytest.approx(0.5)
    for f in (ruin_probability_closed, ruin_probability_exact):
        assert f(1, 2, 10, 1) == 1.0
        assert f(1, 2, 10, 3) == 0.0


def test_ruin_domains():
    with pytest.raises(ValueError):
        ruin_probability_closed(3, 3, 12, 4)  # needs d + r < n/2
    with pytest.raises(ValueError):
        ruin_probability_exact(3, 10, 12, 4)


@given(st.integers(8, 120), st.data())
def test_exact_below_closed_form(n, data):
    r = data.draw(st.integers(0, n // 4))
    d = data.draw(st.integers(1, max(1, (n - 1) // 2 - r)))
    if not d + r < n / 2:
        return
    p, resid = ruin_exact_system(r, d, n)
    assert resid < 1e-12
    for k in range(d + 1):
        assert p[k] <= ruin_probability_closed(r, d, n, r + k) + 1e-12


def test_exact_system_satisfies_recurrence():
    r, d, n = 2, 9, 30
    p, _ = ruin_exact_system(r, d, n)
    for k in range(1, d):
        x = r + k
        assert p[k] == pytest.approx((n - x) / n * p[k + 1] + x / n * p[k - 1], abs=1e-14)


def test_walk_simulation_matches_exact():
    r, d, n, x = 2, 6, 40, 4
    exact = ruin_probability_exact(r, d, n, x)
    est, _ = simulate_ruin_walk(r, d, n, x, 10**5, np.random.default_rng(3))
    assert abs(est - exact) <= 3 * binomial_sigma(exact, 10**5)
    est_b, sig_b = simulate_ruin_walk(r, d, n, x, 10**4, np.random.default_rng(4), op=MutationOp.bitwise())
    assert 0 <= est_b <= 1 and sig_b > 0


# loss of the optimal region ----------------------------------------------


def test_loss_probability_bound():
    assert LOSS_PROBABILITY_FLOOR == pytest.approx(0.172318, abs=1e-6)
    b_max = 1 / (1 + 2 * math.e)
    for b in np.linspace(1e-6, b_max, 50):
        assert loss_probability_bound(b) >= LOSS_PROBABILITY_FLOOR - 1e-12
    assert loss_probability_bound(b_max) == pytest.approx(LOSS_PROBABILITY_FLOOR)


def test_no_episodes_without_loss():
    F = MhbInstance(MhbParams.from_fraction(50, 0.1, 1, 1e15), np.random.default_rng(0))
    tr = run_single(F, MutationOp.bitwise(), 5000, np.random.default_rng(1))
    rep = loss_events(tr, F)
    assert rep.episodes == [] and rep.unrecovered == 0


def test_single_individual_loses_at_the_predicted_rate():
    lost = inside = 0
    seed = 0
    while inside < 2000:
        F = MhbInstance(MhbParams.from_fraction(100, 0.1, 1, 2000.0), np.random.default_rng(seed))
        tr = run_single(F, MutationOp.bitwise(), 10000, np.random.default_rng(10**6 + seed), keep_points=False)
        rep = loss_events(tr, F)
        lost += rep.changes_lost
        inside += rep.changes_inside
        seed += 1
    rate = lost / inside
    assert rate >= 0.17 - 3 * binomial_sigma(rate, inside)


def test_loss_report_fields():
    F = MhbInstance(MhbParams.from_fraction(100, 0.1, 1, 500.0), np.random.default_rng(0))
    tr = run_single(F, MutationOp.bitwise(), 200_000, np.random.default_rng(1), keep_points=False)
    d = loss_events(tr, F).to_dict()
    assert d["n_episodes"] >= 1 and d["unrecovered"] <= 1
    for a, b in d["episodes"]:
        assert b is None or b > a


def test_population_rarely_loses_the_whole_ball():
    # literal target: no whole-population loss over 10^6 evaluations in >= 95% of 30 seeds
    params = MhbParams.from_fraction(100, 0.1, 1, 500.0)
    clean = 0
    for seed in range(30):
        F = MhbInstance(params, np.random.default_rng(seed))
        tr = run_population(
            F, 125, SelectionSpec.tournament(33), MutationOp.bitwise(), 10**6, np.random.default_rng(500 + seed),
            keep_points=False,
        )
        clean += not loss_events(tr, F).episodes
    assert clean >= math.ceil(0.95 * 30), f"{clean}/30 seeds without a whole-population loss"
