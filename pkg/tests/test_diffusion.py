import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab import diffusion as df
from blowup_lab.diffusion import CoefficientField, McEstimate, PathBatch
from blowup_lab.geometry import Ball, Box, Interval
from blowup_lab.rng import Stream

UNIT = Interval(0, 1)
BM = CoefficientField.brownian(1)
TRANSPORT = CoefficientField.constant_drift((1.0,), sigma=0.0)


def _batch(tau, seed=0):
    tau = np.asarray(tau, dtype=float)
    n = tau.size
    return PathBatch(np.array([0.5]), 1e-3, seed, np.arange(n), tau, np.ones((n, 1)), np.ones(n, dtype=bool))


# --- single paths ---------------------------------------------------------------------


@pytest.mark.parametrize("dt", [0.1, 0.05, 0.007, 1e-3])
def test_transport_exit_is_exact(dt):
    path = df.simulate_to_exit(TRANSPORT, UNIT, 0.3, dt, Stream(0), t_max=5.0)
    assert path.exited
    assert path.exit_time == pytest.approx(0.7, abs=1e-12)
    assert path.exit_point == pytest.approx([1.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(0.01, 0.99))
def test_transport_exit_within_one_interpolation_step(dt, x):
    path = df.simulate_to_exit(TRANSPORT, UNIT, x, dt, Stream(0), t_max=5.0)
    assert abs(path.exit_time - (1 - x)) <= 1e-9 + 1e-12 * dt


def test_start_on_boundary_exits_immediately():
    path = df.simulate_to_exit(BM, UNIT, 0.0, 1e-3, Stream(0), t_max=1.0)
    assert path.exited and path.exit_time == 0.0


def test_start_outside_is_an_error():
    with pytest.raises(df.SimulationError):
        df.simulate_to_exit(BM, UNIT, 1.5, 1e-3, Stream(0), t_max=1.0)


@pytest.mark.parametrize("domain,x", [(UNIT, (0.4,)), (Ball((0, 0), 1), (0.2, 0.1)), (Box((0, 0), (1, 2)), (0.5, 0.5))])
def test_pre_exit_states_are_interior(domain, x):
    fld = CoefficientField.brownian(domain.dimension)
    for idx in range(20):
        path = df.simulate_to_exit(fld, domain, x, 1e-3, Stream(3, idx), t_max=20.0)
        assert path.exited
        assert np.all(domain.signed_distance(path.states) > 0)
        assert domain.distance_to_boundary(path.exit_point) == 0.0
        # fixed steps: tau is a grid time minus a correction in [0, dt)
        k = path.states.shape[0]
        assert (k - 1) * 1e-3 - 1e-12 <= path.exit_time <= k * 1e-3 + 1e-12


# --- batches -------------------------------------------------------------------


def test_batch_determinism_and_seed_dependence():
    a = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 11, 500, 5.0)
    b = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 11, 500, 5.0)
    c = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 12, 500, 5.0)
    np.testing.assert_array_equal(a.tau_hat, b.tau_hat)
    assert sorted(a.tau_hat) != sorted(c.tau_hat)


@pytest.mark.parametrize("adapt", [None, 4.0])
def test_batch_is_identical_under_any_worker_count(adapt):
    ref = df.simulate_batch(BM, UNIT, 0.3, 1e-3, 5, 1001, 5.0, adapt=adapt, workers=1)
    for w in (2, 3, 8):
        other = df.simulate_batch(BM, UNIT, 0.3, 1e-3, 5, 1001, 5.0, adapt=adapt, workers=w)
        assert ref.tau_hat.tobytes() == other.tau_hat.tobytes()
        assert ref.exit_points.tobytes() == other.exit_points.tobytes()


def test_singleton_batch_matches_single_path():
    batch = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 9, 1, 5.0)
    path = df.simulate_to_exit(BM, UNIT, 0.5, 1e-3, Stream(9, 0), 5.0)
    assert batch.tau_hat[0] == path.exit_time
    np.testing.assert_array_equal(batch.exit_points[0], path.exit_point)


def test_path_prefix_does_not_depend_on_batch_size():
    small = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 2, 10, 5.0)
    large = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 2, 100, 5.0)
    np.testing.assert_array_equal(small.tau_hat, large.tau_hat[:10])


def test_unexited_paths_are_reported():
    batch = df.simulate_batch(BM, UNIT, 0.5, 1e-3, 0, 200, t_max=0.01)
    assert batch.unexited_fraction > 0.9
    with pytest.raises(df.UnexitedPathsError):
        df.estimate_mean_exit_time(batch)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        df.simulate_batch(BM, UNIT, 0.5, 0.0, 0, 10, 1.0)
    with pytest.raises(ValueError):
        df.simulate_batch(BM, UNIT, 0.5, 1e-3, 0, 0, 1.0)
    with pytest.raises(ValueError):
        df.simulate_batch(BM, UNIT, (0.5, 0.5), 1e-3, 0, 10, 1.0)


def test_csv_columns(tmp_path):
    batch = df.simulate_batch(CoefficientField.brownian(2), Ball((0, 0), 1), (0, 0), 1e-2, 0, 5, 10.0)
    out = tmp_path / "paths.csv"
    batch.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "path_id,tau_hat,exit_coord_0,exit_coord_1,exited"
    assert len(lines) == 6


# --- exit-time functionals -----------------------------------------------------------


def test_constant_sample_estimates():
    est = df.estimate_mean_exit_time(_batch([0.7] * 10))
    assert est.mean == pytest.approx(0.7) and est.standard_error == 0.0
    assert df.estimate_exp_moment(_batch([0.7] * 10), 1.0).mean == pytest.approx(math.exp(0.7))
    assert df.estimate_exp_moment(_batch([0.3, 0.9]), 0.0).mean == 1.0
    assert df.estimate_exp_moment(_batch([0.3, 0.9]), 0.0).standard_error == 0.0
    assert df.estimate_inverse_power_moment(_batch([0.5] * 4), 1).mean == pytest.approx(2.0)
    assert df.estimate_inverse_power_moment(_batch([0.25] * 4), 2).mean == pytest.approx(2.0)


def test_deterministic_batch_estimate():
    batch = df.simulate_batch(TRANSPORT, UNIT, 0.3, 0.01, 0, 50, 5.0)
    est = df.estimate_mean_exit_time(batch)
    assert est.mean == pytest.approx(0.7, abs=1e-12)
    assert est.standard_error < 1e-12


@pytest.mark.parametrize("x", [0.5, 0.1])
def test_brownian_mean_exit_time(x):
    batch = df.simulate_batch(BM, UNIT, x, 1e-2, 2024, 100_000, 10.0, adapt=4.0, workers=4)
    est = df.estimate_mean_exit_time(batch)
    assert abs(est.mean - x * (1 - x)) <= 3 * est.standard_error


def test_brownian_exp_moment_is_stable():
    batch = df.simulate_batch(BM, UNIT, 0.5, 1e-2, 7, 100_000, 10.0, adapt=4.0, workers=4)
    est = df.estimate_exp_moment(batch, 1.0)
    assert np.isfinite(est.mean)
    assert est.standard_error / est.mean < 0.05


def test_inverse_moment_band_near_boundary():
    vals = []
    for x in (0.01, 0.05):
        batch = df.simulate_batch(BM, UNIT, x, 1e-3, 1, 20_000, 10.0, adapt=4.0, workers=4)
        vals.append(x**2 * df.estimate_inverse_power_moment(batch, 1).mean)
    assert max(vals) / min(vals) < 10


def test_inverse_moment_rejects_zero_times():
    with pytest.raises(ValueError):
        df.estimate_inverse_power_moment(_batch([0.0, 1.0]), 1)
    with pytest.raises(ValueError):
        df.estimate_inverse_power_moment(_batch([1.0]), 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1.0, 50.0), min_size=2, max_size=20), st.floats(0.2, 5), st.floats(0.01, 5))
def test_inverse_moment_monotone_in_q_for_long_times(taus, q, dq):
    b = _batch(taus)
    lo = df.estimate_inverse_power_moment(b, q).mean
    hi = df.estimate_inverse_power_moment(b, q + dq).mean
    assert hi >= lo * (1 - 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=20), st.floats(0.2, 5), st.floats(0.01, 5))
def test_inverse_moment_monotone_in_q_for_short_times(taus, q, dq):
    b = _batch(taus)
    lo = df.estimate_inverse_power_moment(b, q).mean
    hi = df.estimate_inverse_power_moment(b, q + dq).mean
    assert hi <= lo * (1 + 1e-12)


def test_mc_estimate_validation():
    with pytest.raises(ValueError):
        McEstimate(1.0, -1.0, 3)
    with pytest.raises(ValueError):
        McEstimate(1.0, 0.0, 0)
    assert McEstimate.from_samples([2.0]).standard_error == 0.0


# --- coefficient checks ---------------------------------------------------------------


def test_brownian_coefficients_pass():
    rep = df.check_coefficients(BM, UNIT)
    assert rep.verdict
    assert rep.measured["K_bound"] == pytest.approx(1.0)
    assert rep.measured["alpha_ellipticity"] == pytest.approx(1.0)


def test_degenerate_field_fails_ellipticity():
    rep = df.check_coefficients(TRANSPORT, UNIT)
    assert not rep.verdict
    assert rep.measured["alpha_ellipticity"] == 0.0
    failing = {c.name for c in rep.conditions if not c.ok}
    assert "ellipticity_positive" in failing


@pytest.mark.parametrize("declared,ok", [(0.5, True), (0.6, True), (0.4, False)])
def test_linear_drift_bound(declared, ok):
    # sigma = 0 isolates |b| = |x - 1/2|, maximal at the endpoints
    fld = CoefficientField.linear_drift(1.0, (0.5,), sigma=0.0, K_bound=declared)
    rep = df.check_coefficients(fld, UNIT)
    assert rep.measured["K_bound"] == pytest.approx(0.5)
    bound = next(c for c in rep.conditions if c.name == "boundedness")
    assert bound.holds is ok


def test_tabulated_field_lipschitz():
    fld = CoefficientField.tabulated([0, 0.5, 1], [0, 0, 0], [1, 2, 1], K_bound=2.0, alpha_ellipticity=1.0, K_lipschitz=2.0)
    rep = df.check_coefficients(fld, UNIT, 101)
    assert rep.measured["K_lipschitz"] == pytest.approx(2.0)
    assert rep.verdict


def test_tabulated_field_validation():
    with pytest.raises(ValueError):
        CoefficientField.tabulated([0, 1], [0], [1, 1])
    with pytest.raises(ValueError):
        CoefficientField.tabulated([1, 0], [0, 0], [1, 1])
