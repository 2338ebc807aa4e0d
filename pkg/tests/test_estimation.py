import json
import math

import numpy as np
import pytest

from wnvdb import estimation as est
from wnvdb.errors import DegenerateVariance, NoAsymptote, NotConverged, TooFewPoints
from wnvdb.pipeline import WeeklySeries
from wnvdb.richards import RichardsParams, expected_incidence, richards_mean

TRUE = [5.0, 300.0, 0.6, 10.0, 1.0]


def simulated(seed=5, values=TRUE, T=25):
    rng = np.random.default_rng(seed)
    return WeeklySeries.from_incidence(rng.poisson(expected_incidence(T, values)).tolist())


@pytest.fixture(scope="module")
def series():
    return simulated()


@pytest.fixture(scope="module")
def result(series):
    return est.fit(series, est.FitConfig(seed=3))


def test_fit_recovers_truth(result):
    assert result.converged
    assert result.params_hat.r == pytest.approx(TRUE[1], rel=0.1)
    assert result.params_hat.p == pytest.approx(TRUE[3], abs=1.0)
    assert 0.9 < result.r_squared <= 1.0
    assert len(result.fitted_incidence) == 25


def test_ci_brackets_estimates(result):
    for name, value in result.estimates().items():
        ci = result.ci[name]
        if ci is not None:
            assert ci[0] <= value <= ci[1]


def test_likelihood_ascent(result):
    for start in result.starts:
        if math.isfinite(start.initial_loglik):
            assert result.loglik_hat >= start.initial_loglik - 1e-9
            assert result.loglik_hat >= start.final_loglik - 1e-9


def test_fit_is_deterministic(series, result):
    again = est.fit(series, est.FitConfig(seed=3))
    assert again.to_json() == result.to_json()


def test_json_round_trip(result):
    back = est.FitResult.from_json(result.to_json())
    assert back.to_json() == result.to_json()
    keys = json.loads(result.to_json()).keys()
    assert {"params", "ci", "loglik", "r2", "converged", "seed", "variant", "family"} <= set(keys)


def test_nested_levels(series, result):
    narrow = est.wald_ci(result, series, level=0.95)
    wide = est.wald_ci(result, series, level=0.99)
    for name, ci in narrow.items():
        if ci is not None:
            assert wide[name][0] <= ci[0] and ci[1] <= wide[name][1]
            assert wide[name][1] - wide[name][0] > ci[1] - ci[0]


def test_replicated_data_shrinks_standard_errors(series, result):
    # three independent copies of every week multiply the information by three
    config = result.config
    obj = est._Objective(series, config)
    theta = obj.transform.to_theta(np.array([result.estimates()[n] for n in obj.transform.names]))
    cov1, m1 = est._covariance(est.numerical_hessian(obj, theta))
    cov3, m3 = est._covariance(est.numerical_hessian(lambda th: 3.0 * obj(th), theta))
    assert m1.any() and np.array_equal(m1, m3)
    ratio = np.sqrt(np.diag(cov1)[m1] / np.diag(cov3)[m3])
    assert np.all(np.abs(ratio / math.sqrt(3.0) - 1.0) < 0.15)


def test_reparameterisation_coherence(series):
    a = est.fit(series, est.FitConfig(bounds={"b": (0.0, 1e6)}))
    b = est.fit(series, est.FitConfig(bounds={"b": (0.0, 1e3)}))
    assert 0.0 < a.params_hat.b < 1e3
    for name in ("b", "r", "h", "p", "s"):
        assert getattr(a.params_hat, name) == pytest.approx(getattr(b.params_hat, name), rel=1e-4, abs=1e-6)


def test_zero_series_is_degenerate_but_converged():
    zero = WeeklySeries.from_incidence([0] * 12)
    res = est.fit(zero)
    assert res.converged
    assert res.params_hat.b == 0.0 and res.params_hat.r <= 1e-9
    assert max(res.fitted_incidence) < 1e-9
    assert math.isnan(res.r_squared)
    assert all(ci is None for ci in res.ci.values())
    fc = est.forecast(res, zero, 3)
    assert fc.interval == ((0.0, 0.0),) * 3


def test_plug_in_fallback(monkeypatch):
    zero = WeeklySeries.from_incidence([0] * 10)
    res = est.fit(zero)
    monkeypatch.setattr(est, "numerical_hessian", lambda f, x, rel_step=1e-4: np.full((x.size, x.size), np.nan))
    fc = est.forecast(res, zero, 2, n_sims=200)
    assert fc.plug_in
    assert fc.interval == ((0.0, 0.0), (0.0, 0.0))


def test_singular_hessian_marks_unavailable():
    hess = np.diag([4.0, 0.0, 1.0])
    cov, mask = est._covariance(hess)
    assert mask.tolist() == [True, False, True]
    assert cov[0, 0] == pytest.approx(0.25) and cov[1, 1] == 0.0
    flat = np.array([[1.0, 1.0], [1.0, 1.0]])
    _, mask = est._covariance(flat)
    assert mask.sum() == 1
    _, mask = est._covariance(np.full((2, 2), np.nan))
    assert not mask.any()


def test_fixed_bound_parameter_is_unavailable():
    # b pinned at its lower bound carries no curvature
    y = np.random.default_rng(2).poisson(expected_incidence(20, [0.0, 200.0, 0.7, 9.0, 1.0]))
    res = est.fit(WeeklySeries.from_incidence(y.tolist()))
    assert res.params_hat.b < 1e-6
    assert res.ci["b"] is None
    assert res.ci["r"] is not None


def test_negbin_fit(series):
    res = est.fit(series, est.FitConfig(family="negbin", n_starts=10))
    assert res.dispersion_hat is not None and res.dispersion_hat > 0
    assert "dispersion" in res.ci
    assert res.params_hat.r == pytest.approx(TRUE[1], rel=0.15)
    # Poisson is the k -> infinity limit, so the extra parameter cannot buy more than a sliver
    poisson = est.fit(series, est.FitConfig(n_starts=10))
    assert res.loglik_hat <= poisson.loglik_hat + 1e-3


def test_linear_drift_fit():
    rng = np.random.default_rng(8)
    y = rng.poisson(expected_incidence(25, [0.3, 200.0, 0.7, 10.0, 1.0], drift=True))
    res = est.fit(WeeklySeries.from_incidence(y.tolist()), est.FitConfig(variant="drift", n_starts=9))
    assert res.params_hat.variant.value == "linear_drift"
    with pytest.raises(NoAsymptote):
        est.final_epidemic_size(res.params_hat)


def test_fixed_parameters_are_respected(series):
    res = est.fit(series, est.FitConfig(fixed={"s": 1.0, "b": 5.0}, n_starts=9))
    assert res.params_hat.s == 1.0 and res.params_hat.b == 5.0
    assert set(res.ci) == {"r", "h", "p"}


def test_too_few_points():
    with pytest.raises(TooFewPoints):
        est.fit(WeeklySeries.from_incidence([1, 2, None, 4, 5, None, None]))


def test_config_validation():
    with pytest.raises(ValueError):
        est.FitConfig(n_starts=0)
    with pytest.raises(ValueError):
        est.FitConfig(bounds={"h": (1.0, -1.0)})
    with pytest.raises(ValueError):
        est.FitConfig(bounds={"q": (0.0, 1.0)})
    cfg = est.FitConfig(family="negbin", variant="baseline", seed=4)
    assert est.FitConfig.from_dict(cfg.as_dict()) == cfg


def test_default_bounds():
    b = est.default_bounds(20)
    assert b["p"] == (-20.0, 40.0) and b["s"] == (0.0, 10.0) and b["h"] == (-10.0, 10.0)
    assert b["b"][0] == 0.0 and math.isinf(b["r"][1])


@pytest.mark.parametrize("obs, fit, expected", [
    ([1, 2, 3], [1, 2, 3], 1.0),
    ([1, 2, 3], [2, 2, 2], 0.0),
    ([1, 2, 3], [1, 2, 4], 0.5),
    ([1, None, 2, 3], [1, 7, 2, 4], 0.5),
])
def test_r_squared(obs, fit, expected):
    assert est.r_squared(obs, fit) == pytest.approx(expected)


def test_r_squared_errors():
    with pytest.raises(DegenerateVariance):
        est.r_squared([2, 2, 2], [1, 2, 3])
    with pytest.raises(TooFewPoints):
        est.r_squared([1, None], [1, 2])


@pytest.mark.parametrize("b, r, size", [(0.190, 0.2517, 0.4417), (0.8468, 0.0636, 0.9104)])
def test_final_size(b, r, size):
    params = RichardsParams(b, r, 0.5, 5.0, 1.0)
    assert est.final_epidemic_size(params) == pytest.approx(size, abs=5e-5)
    assert est.final_epidemic_size(params, 1000, scale="per1000") == pytest.approx(size, abs=5e-5)


def test_final_size_scales():
    params = RichardsParams(0.0, 1e-300, 1.0, 1.0, 1.0)
    assert est.final_epidemic_size(params) == pytest.approx(0.0)
    counts = RichardsParams(10.0, 90.0, 0.5, 5.0, 1.0)
    assert est.final_epidemic_size(counts, 200_000, scale="count") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        est.final_epidemic_size(counts, 200_000)


def test_final_size_matches_curve_limit():
    params = RichardsParams(0.7, 123.0, 0.4, 8.0, 0.3)
    far = richards_mean(params.p + 50.0 / params.h, params)
    assert est.final_epidemic_size(params) == pytest.approx(far, rel=1e-6)


def test_forecast_contract(series, result):
    fc = est.forecast(result, series, 3, seed=11)
    assert fc.horizon == 3 and fc.weeks == (26, 27, 28)
    for p, (lo, hi) in zip(fc.point, fc.interval):
        assert lo <= p <= hi
    assert est.forecast(result, series, 3, seed=11) == fc
    wide = est.forecast(result, series, 3, level=0.99, seed=11)
    for (a, b), (c, d) in zip(fc.interval, wide.interval):
        assert c <= a and b <= d
    assert est.Forecast.from_json(fc.to_json()) == fc


def test_forecast_errors(series, result):
    with pytest.raises(ValueError):
        est.forecast(result, series, 0)
    stalled = est.FitResult.from_json(result.to_json().replace('"converged": true', '"converged": false'))
    with pytest.raises(NotConverged):
        est.forecast(stalled, series, 2)
    with pytest.raises(NotConverged):
        est.wald_ci(stalled, series)


def test_holdout_check(series):
    report = est.holdout_check(series, 3, est.FitConfig(n_starts=9), n_sims=500)
    assert report.total == 3 and 0 <= report.hits <= 3
    assert report.forecast.weeks == (23, 24, 25)
    with pytest.raises(ValueError):
        est.holdout_check(series, series.T, est.FitConfig())


def test_fitted_bands(series, result):
    lo, hi = est.fitted_bands(result, series, n_sims=300)
    assert lo.shape == hi.shape == (series.T,)
    assert np.all(lo <= hi)
