import json
import math

import numpy as np
import pytest

from ilscale.parametric import QuadraticSurface, alpha_beta, constrained_search, fit_surface
from ilscale.records import format_records, group_by_budget
from ilscale.synth import DEFAULT_SURFACE, SynthSpec, analytic_optima, default_spec, generate, load_spec


def test_default_grid_shape():
    spec = default_spec()
    recs = generate(spec)
    assert len(recs) == 54
    groups = group_by_budget(recs)
    assert [len(g.records) for g in groups] == [9] * 6
    for r in recs:
        assert r.flops == pytest.approx(6 * r.params * r.samples, rel=1e-12)
        assert r.loss > 0 and r.mean_return > 0


def test_fourteen_by_six_grid_groups():
    base = default_spec()
    grid = tuple(int(round(10 ** (4 + 4 * i / 13))) for i in range(14))
    spec = SynthSpec(base.surface, base.budgets, grid, seed=1)
    groups = group_by_budget(generate(spec))
    assert len(groups) == 6 and all(len(g.records) == 14 for g in groups)


def test_noise_free_refit_is_exact():
    recs = generate(default_spec(0.0))
    fit = fit_surface(recs, "loss")
    np.testing.assert_allclose(fit.coeffs, DEFAULT_SURFACE.coeffs, rtol=1e-8, atol=1e-8)


def test_same_seed_same_bytes_and_different_seed_differs():
    spec = default_spec(0.05, seed=11)
    a = format_records(generate(spec))
    b = format_records(generate(spec))
    c = format_records(generate(spec.with_seed(12)))
    assert a == b
    assert a != c


def test_optima_match_brute_force_search():
    spec = default_spec()
    truth = analytic_optima(spec)
    for c, n in zip(truth.budgets, truth.n_opt):
        found = constrained_search(spec.surface, c)
        assert abs(math.log(found.n) - math.log(n)) < 1e-6
    assert truth.alpha + truth.beta == 1.0


def test_symmetric_surface_truth():
    q = 0.01
    surface = QuadraticSurface(b0=3.0, bN=-0.3, bD=-0.3, bN2=q, bND=0.0, bD2=q)
    spec = SynthSpec(surface, (6e10, 6e12), (1000, 10000, 100000))
    truth = analytic_optima(spec)
    assert truth.alpha == pytest.approx(0.5, abs=1e-14)
    assert truth.G == pytest.approx(1.0, abs=1e-14)
    assert truth.n_opt[0] == pytest.approx(1e5, rel=1e-12)


def test_default_loss_frontier_is_power_law():
    # perfect-square curvature makes ln L_opt exactly linear in ln C
    truth = analytic_optima(default_spec())
    slopes = np.diff(np.log(truth.loss_opt)) / np.diff(np.log(truth.budgets))
    np.testing.assert_allclose(slopes, truth.gamma_loss, rtol=1e-10)
    assert truth.gamma_return == pytest.approx(-2.0 * truth.gamma_loss, rel=1e-10)


def test_ridge_surface_alpha_against_grid_search():
    # Cobb-Douglas slopes plus a small symmetric ridge
    surface = QuadraticSurface(b0=2.0, bN=-0.2, bD=-0.3, bN2=0.05, bND=0.0, bD2=0.05)
    spec = SynthSpec(surface, (1e12, 1e14, 1e16), (10, 100, 1000))
    truth = analytic_optima(spec)
    ln_n = [math.log(constrained_search(surface, c).n) for c in spec.budgets]
    slope = np.polyfit(np.log(np.array(spec.budgets) / 6), ln_n, 1)[0]
    assert truth.alpha == pytest.approx(slope, abs=1e-6)
    assert truth.alpha == pytest.approx(0.5, abs=1e-12)


def test_pipeline_closure():
    spec = default_spec(0.0)
    truth = analytic_optima(spec)
    law = alpha_beta(fit_surface(generate(spec)))
    assert law.alpha == pytest.approx(truth.alpha, abs=1e-6)
    assert law.beta == pytest.approx(truth.beta, abs=1e-6)
    assert law.G == pytest.approx(truth.G, rel=1e-6)


def test_estimator_spread_grows_with_noise():
    spreads = []
    for sigma in (0.0, 0.01, 0.1):
        alphas = [alpha_beta(fit_surface(generate(default_spec(sigma, seed)))).alpha for seed in range(20)]
        spreads.append(float(np.std(alphas)))
    assert spreads[0] < 1e-8
    assert spreads[0] <= spreads[1] <= spreads[2]


def test_truth_serializes(tmp_path):
    spec = default_spec()
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    again = load_spec(str(path))
    assert again == spec
    d = analytic_optima(spec).to_dict()
    assert len(d["optima"]) == 6 and d["delta"] == -2.0


@pytest.mark.parametrize("bad, message", [
    ({"budgets": [1e14, 1e13]}, "ascending"),
    ({"model_grid": []}, "non-empty"),
    ({"noise_sigma": -0.1}, "noise_sigma"),
    ({"surface": {"b0": 1, "bN": -0.1, "bD": -0.1, "bN2": 0.01, "bND": 0.02, "bD2": 0.01}}, "denominator"),
])
def test_invalid_specs(bad, message):
    d = {**default_spec().to_dict(), **bad}
    with pytest.raises(ValueError, match=message):
        SynthSpec.from_dict(d)


def test_missing_seed_is_rejected():
    d = default_spec().to_dict()
    del d["seed"]
    with pytest.raises(KeyError, match="seed"):
        SynthSpec.from_dict(d)


def test_covariance_is_zeroed():
    noisy = QuadraticSurface.from_coeffs(DEFAULT_SURFACE.coeffs, covariance=np.eye(6))
    spec = SynthSpec(noisy, (1e13, 1e14), (10, 100))
    assert not np.any(spec.surface.covariance)


def test_centered_grid_makes_isoflop_exact():
    from ilscale.flops import BC_RULE
    from ilscale.isoflop import MIN_LOSS, approach1_laws
    from ilscale.synth import model_sizes

    base = default_spec(0.0)
    spec = SynthSpec(base.surface, base.budgets, base.model_grid, grid_center=True)
    truth = analytic_optima(spec)
    for c, n in zip(spec.budgets, truth.n_opt):
        sizes = model_sizes(spec, c)
        assert math.exp(np.mean(np.log(sizes))) == pytest.approx(n, rel=1e-4)
    laws = approach1_laws(group_by_budget(generate(spec)), MIN_LOSS, BC_RULE)
    assert laws.alpha == pytest.approx(truth.alpha, abs=1e-5)
    assert SynthSpec.from_dict(spec.to_dict()) == spec
