import math

import numpy as np
import pytest

from conftest import random_surface
from ilscale.parametric import (
    Direction,
    NoInteriorAllocation,
    QuadraticSurface,
    alpha_beta,
    alpha_gradient,
    constrained_search,
    delta_ci,
    fit_surface,
    optimal_allocation,
)
from ilscale.records import ExperimentRecord
from ilscale.synth import default_spec, generate


def _records(surface, budgets=(1e13, 1e14, 1e15, 1e16), grid=(1e4, 1e5, 1e6, 1e7), metric="loss"):
    out = []
    for c in budgets:
        for n in grid:
            d = c / (6 * n)
            value = float(surface.metric(n, d))
            kw = {"loss": value} if metric == "loss" else {"mean_return": value, "setting": "bc_return"}
            out.append(ExperimentRecord(**{"domain": "t", "setting": "bc_loss", "flops": c, "params": int(n),
                                           "samples": d, **kw}))
    return out


def brute_force_optimum(surface, budget, denom=6.0, lo=-5.0, hi=60.0, points=2_000_001):
    """Dense scan of ln N along denom*N*D = budget; independent of the closed form."""
    u = np.linspace(lo, hi, points)
    v = math.log(budget / denom) - u
    val = surface.log_metric(u, v)
    k = np.argmin(val) if surface.direction is Direction.MINIMIZE else np.argmax(val)
    return float(u[k])


def test_fit_recovers_noise_free_surface(rng):
    truth = random_surface(rng)
    fit = fit_surface(_records(truth))
    np.testing.assert_allclose(fit.coeffs, truth.coeffs, rtol=1e-8, atol=1e-8)
    assert fit.direction is Direction.MINIMIZE and fit.n == 16


def test_fit_single_n_is_rank_error():
    truth = QuadraticSurface(1, -0.2, -0.3, 0.01, 0, 0.01)
    with pytest.raises(ValueError, match="distinct N"):
        fit_surface(_records(truth, grid=(1e5,), budgets=tuple(10.0**k for k in range(10, 20))))


def test_fit_collinear_design_is_rank_error():
    # one model per budget with D proportional to N makes ln D affine in ln N
    recs = []
    for i, n in enumerate(10 ** np.linspace(3, 6, 9)):
        d = 7 * n
        recs.append(ExperimentRecord("t", "bc_loss", 6 * n * d, int(round(n)), 7 * int(round(n)), loss=1 + i / 10))
    with pytest.raises(ValueError, match="rank deficient"):
        fit_surface(recs)


def test_fit_drops_nonpositive_returns(rng, caplog):
    truth = random_surface(rng).flipped()
    recs = _records(truth, metric="return")
    bad = ExperimentRecord("t", "bc_return", 6e13, 10, 1e12, mean_return=-1.0)
    fit = fit_surface(recs + [bad], "return")
    assert fit.direction is Direction.MAXIMIZE
    assert len(fit.warnings) == 1 and "excluded" in caplog.text
    np.testing.assert_allclose(fit.coeffs, truth.coeffs, rtol=1e-7, atol=1e-8)


def test_fit_too_few_records():
    truth = QuadraticSurface(1, -0.2, -0.3, 0.01, 0, 0.01)
    with pytest.raises(ValueError, match="at least 7"):
        fit_surface(_records(truth)[:6])


def test_each_coefficient_within_three_se():
    spec = default_spec(noise_sigma=0.01)
    truth = spec.surface.coeffs
    hits = np.zeros(6)
    trials = 200
    for seed in range(trials):
        fit = fit_surface(generate(spec.with_seed(seed)))
        se = np.sqrt(np.diag(fit.covariance))
        hits += np.abs(fit.coeffs - truth) <= 3 * se
    assert np.all(hits / trials >= 0.95), hits / trials


def test_symmetric_surface():
    s = QuadraticSurface(0, -0.3, -0.3, 0.5, 0, 0.5)
    law = alpha_beta(s)
    assert law.alpha == 0.5 and law.beta == 0.5 and law.G == 1.0


def test_alpha_two_thirds_against_grid_oracle():
    s = QuadraticSurface(0, -0.2, -0.1, 0.5, 0, 1.0)
    law = alpha_beta(s)
    assert law.alpha == pytest.approx(2 / 3, abs=1e-15) and law.beta == pytest.approx(1 / 3, abs=1e-15)
    budgets = [1e8, 1e10, 1e12, 1e14]
    log_n = [brute_force_optimum(s, c) for c in budgets]
    slope = np.polyfit(np.log(budgets), log_n, 1)[0]
    assert slope == pytest.approx(2 / 3, abs=1e-4)


def test_alpha_plus_beta_is_one(rng):
    for _ in range(200):
        s = random_surface(rng)
        law = alpha_beta(s)
        assert abs(law.alpha + law.beta - 1) <= 1e-14
        assert law.G > 0


def test_wrong_sign_denominator():
    s = QuadraticSurface(0, -0.3, -0.3, -0.5, 0, -0.5)
    with pytest.raises(NoInteriorAllocation, match="no interior optimum"):
        alpha_beta(s)
    with pytest.raises(NoInteriorAllocation):
        alpha_beta(QuadraticSurface(0, 0, 0, 0.5, 1.0, 0.5))


def test_direction_flip_keeps_allocation(rng):
    for _ in range(20):
        s = random_surface(rng)
        a, b = alpha_beta(s), alpha_beta(s.flipped())
        assert (a.alpha, a.beta) == pytest.approx((b.alpha, b.beta), abs=1e-15)
        assert a.G == pytest.approx(b.G, rel=1e-14)


def test_allocation_examples():
    s = QuadraticSurface(0, -0.3, -0.3, 0.5, 0, 0.5)
    assert optimal_allocation(s, 6e6, 6) == pytest.approx((1000, 1000), rel=1e-12)
    assert optimal_allocation(s, 8e6, 8) == pytest.approx((1000, 1000), rel=1e-12)


def test_allocation_product_and_formula(rng):
    for _ in range(100):
        s = random_surface(rng)
        law = alpha_beta(s)
        for c in (1e10, 1e15, 1e20):
            n, d = optimal_allocation(s, c, 6)
            assert n * d * 6 == pytest.approx(c, rel=1e-10)
            assert d == pytest.approx((c / 6) ** law.beta / law.G, rel=1e-9)


def test_allocation_matches_brute_force(rng):
    for _ in range(10):
        s = random_surface(rng)
        n, _ = optimal_allocation(s, 1e15)
        assert abs(math.log(n) - brute_force_optimum(s, 1e15, lo=math.log(n) - 10, hi=math.log(n) + 10)) < 1e-4


def test_constrained_search_symmetric():
    s = QuadraticSurface(0, -0.3, -0.3, 0.5, 0, 0.5)
    for c in (6e4, 6e9, 6e12):
        r = constrained_search(s, c, 6)
        assert r.n == pytest.approx(r.d, rel=1e-5) and not r.at_boundary


def test_constrained_search_flags_boundary():
    s = QuadraticSurface(0, -0.3, -0.3, -0.5, 0, -0.5)
    r = constrained_search(s, 1e12, 6)
    assert r.at_boundary


def test_constrained_search_grid_minimum():
    with pytest.raises(ValueError):
        constrained_search(QuadraticSurface(0, 0, 0, 1, 0, 1), 1e6, grid=10)


def test_constrained_search_maximize(rng):
    s = random_surface(rng).flipped()
    n, _ = optimal_allocation(s, 1e14)
    assert abs(math.log(constrained_search(s, 1e14).n) - math.log(n)) < 1e-3


def _fd_gradient(s, h=1e-6):
    grad = np.zeros(6)
    base = s.coeffs
    for j in range(6):
        up, dn = base.copy(), base.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (alpha_beta(QuadraticSurface.from_coeffs(up)).alpha
                   - alpha_beta(QuadraticSurface.from_coeffs(dn)).alpha) / (2 * h)
    return grad


def test_gradient_matches_finite_differences(rng):
    for _ in range(50):
        s = random_surface(rng)
        g, fd = alpha_gradient(s), _fd_gradient(s)
        assert np.all(np.abs(g - fd) <= 1e-5 * np.max(np.abs(g)))
        assert g[0] == g[1] == g[2] == 0


def test_zero_covariance_gives_point_interval():
    s = QuadraticSurface(0, -0.2, -0.1, 0.5, 0, 1.0)
    lo, hi = delta_ci(s, "alpha")
    assert lo == hi == alpha_beta(s).alpha
    lo, hi = delta_ci(s, "beta")
    assert lo == hi == alpha_beta(s).beta


def test_delta_ci_uses_covariance():
    cov = np.diag([0.0, 0.0, 0.0, 1e-6, 4e-6, 9e-6])
    s = QuadraticSurface(0, -0.2, -0.1, 0.5, 0, 1.0, covariance=cov)
    g = alpha_gradient(s)
    se = math.sqrt(g @ cov @ g)
    lo, hi = delta_ci(s)
    assert (hi - lo) / 2 == pytest.approx(1.96 * se)
    blo, bhi = delta_ci(s, "beta")
    assert bhi - blo == pytest.approx(hi - lo)


def test_delta_ci_rejects_non_finite_covariance():
    s = QuadraticSurface(0, -0.2, -0.1, 0.5, 0, 1.0, covariance=np.full((6, 6), np.inf))
    with pytest.raises(ValueError, match="not finite"):
        delta_ci(s)
