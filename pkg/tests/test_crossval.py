import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ilscale.crossval import cv_all, rolling_cv, trajectory_csv, trajectory_rows
from ilscale.numerics import RegressionError


def exact_points(n, a=2.0, b=0.5):
    return [(x, a * x**b) for x in np.geomspace(1e13, 1e17, n)]


def noisy_points(rng, n, sigma, a=2.0, b=0.5):
    xs = np.geomspace(1e13, 1e17, n)
    return [(x, a * x**b * math.exp(e)) for x, e in zip(xs, rng.normal(0, sigma, n))]


def test_exact_power_law_has_zero_error():
    rep = rolling_cv(exact_points(9), name="n_opt")
    assert len(rep.steps) == 3
    for s in rep.steps:
        assert s.rmse <= 1e-6 * s.actual
        assert s.b1 == pytest.approx(0.5, abs=1e-10)
        assert s.b0 == pytest.approx(math.log(2.0), abs=1e-8)
    assert rep.regression_name == "n_opt"


def test_seven_points_one_step():
    rep = rolling_cv(exact_points(7))
    assert len(rep.steps) == 1
    assert rep.steps[0].train_size == 6


def test_too_few_points():
    with pytest.raises(ValueError, match="at least 7"):
        rolling_cv(exact_points(6))
    assert len(rolling_cv(exact_points(4), min_train=3).steps) == 1


def test_unsorted_points_rejected():
    pts = exact_points(8)
    pts[2], pts[3] = pts[3], pts[2]
    with pytest.raises(ValueError, match="ascending"):
        rolling_cv(pts)


def test_rmse_is_absolute_error_and_mean_is_average(rng):
    rep = rolling_cv(noisy_points(rng, 10, 0.05))
    for s in rep.steps:
        assert s.rmse == abs(s.predicted - s.actual)
    assert rep.mean_rmse == pytest.approx(np.mean([s.rmse for s in rep.steps]), rel=1e-15)


def test_no_look_ahead(rng):
    pts = noisy_points(rng, 12, 0.05)
    rep = rolling_cv(pts)
    xs = [x for x, _ in pts]
    for s in rep.steps:
        train_x = xs[:s.train_size]
        assert s.eval_budget > max(train_x)
        assert s.eval_budget == xs[s.train_size]
    # changing future points never changes earlier predictions
    altered = pts[:8] + [(x, 10 * y) for x, y in pts[8:]]
    rep2 = rolling_cv(altered)
    assert rep2.steps[0].predicted == rep.steps[0].predicted
    assert rep2.steps[1].predicted == rep.steps[1].predicted


def test_explicit_time_axis():
    # x decreasing in time (e.g. loss) is allowed when budgets give the order
    budgets = [10.0**k for k in range(13, 21)]
    pts = [(1.0 / (k - 10), 5.0 * (k - 10) ** 2) for k in range(13, 21)]
    rep = rolling_cv(pts, budgets=budgets)
    assert [s.eval_budget for s in rep.steps] == budgets[6:]
    assert rep.steps[0].rmse == pytest.approx(0, abs=1e-6)


def test_step_failure_is_recorded():
    def flaky(points):
        if len(points) == 7:
            raise RegressionError("boom")
        from ilscale.numerics import fit_power_law
        return fit_power_law(points)

    rep = rolling_cv(exact_points(9), fit=flaky)
    assert [s.failed for s in rep.steps] == [False, True, False]
    assert rep.steps[1].error == "boom"
    assert math.isfinite(rep.mean_rmse)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=7, max_value=14))
def test_deterministic(seed, n):
    pts = noisy_points(np.random.default_rng(seed), n, 0.1)
    a, b = rolling_cv(pts, name="x"), rolling_cv(pts, name="x")
    assert trajectory_csv([a]) == trajectory_csv([b])
    assert len(a.steps) == n - 6


def test_cv_all_collects_errors():
    reps = cv_all({"n_opt": exact_points(9), "d_opt": exact_points(8, 3.0, 0.5), "loss": exact_points(5)})
    assert [r.regression_name for r in reps] == ["n_opt", "d_opt", "loss"]
    assert len(reps[0].steps) == 3 and len(reps[1].steps) == 2
    assert reps[2].error and not reps[2].steps
    assert reps[0].error is None


def test_trajectory_table():
    reps = cv_all({"a": exact_points(9), "b": exact_points(8), "bad": exact_points(3)})
    rows = trajectory_rows(reps)
    assert len(rows) == 5
    parsed = list(csv.DictReader(io.StringIO(trajectory_csv(reps))))
    assert list(parsed[0]) == ["regression_name", "train_size", "b0", "b1", "predicted", "actual", "abs_error"]
    assert [r["train_size"] for r in parsed] == ["6", "7", "8", "6", "7"]
    assert float(parsed[0]["b1"]) == pytest.approx(0.5)


def test_slope_trajectory_converges():
    closer = 0
    for seed in range(100):
        rep = rolling_cv(noisy_points(np.random.default_rng(seed), 20, 0.05))
        closer += abs(rep.steps[-1].b1 - 0.5) <= abs(rep.steps[0].b1 - 0.5)
    assert closer >= 80


def test_noisy_rmse_matches_noise_scale():
    sigma = 0.02
    ratios = []
    for seed in range(200):
        pts = noisy_points(np.random.default_rng(seed), 10, sigma)
        rep = rolling_cv(pts)
        scale = np.mean([sigma * 2.0 * x**0.5 for x, _ in pts[6:]])
        ratios.append(rep.mean_rmse / scale)
    assert 0.5 <= np.mean(ratios) <= 2.0
