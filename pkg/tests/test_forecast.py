from __future__ import annotations


import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import load_fixture
from fixtures.oracles.counting import additive_series, normalised_errors
from confroute.forecast import (
    HWParams,
    SeriesTooShortError,
    TimeSeries,
    accuracy_report,
    fit,
    forecast,
    forecast_many,
    forecast_next_day,
    grid_search,
    read_series_csv,
    score,
    top_k_configs,
    write_series_csv,
)
from confroute.model import CallConfig

GRID = [(a, b, g) for a, b, g in
        [(0.1, 0.01, 0.1), (0.3, 0.05, 0.2), (0.5, 0.1, 0.3), (0.9, 0.5, 0.9), (0.2, 0.0, 0.0),
         (0.0, 0.0, 0.5), (1.0, 1.0, 1.0), (0.7, 0.3, 0.05), (0.4, 0.2, 0.6)]]


def zero_mean_season(L, seed=0):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-20, 20, L)
    return list(s - s.mean())


@pytest.mark.parametrize("a,b,g", GRID)
def test_noiseless_series_is_tracked_exactly(a, b, g):
    L = 24
    season = zero_mean_season(L)
    y = additive_series(100.0, 0.25, season, 5 * L)
    state = fit(y, HWParams(a, b, g, L))
    assert np.max(np.abs(state.one_step_errors)) < 1e-6
    future = additive_series(100.0, 0.25, season, 5 * L + 48)[5 * L:]
    assert np.allclose(forecast(state, 48), future, atol=1e-6)


def test_weekly_season_default_length():
    L = 336
    y = additive_series(50.0, 0.0, zero_mean_season(L, 1), 3 * L)
    state = fit(y)
    assert state.season_length == 336
    assert np.max(np.abs(state.one_step_errors)) < 1e-6
    assert forecast_next_day(state).shape == (48,)


def test_forecast_is_clamped_at_zero():
    L = 4
    y = additive_series(10.0, -1.0, [0.0, 0.0, 0.0, 0.0], 8)
    assert np.all(forecast(fit(y, HWParams(season_length=L)), 40) >= 0)


def test_short_series_rejected():
    with pytest.raises(SeriesTooShortError):
        fit([1.0] * 10, HWParams(season_length=6))


@pytest.mark.parametrize("kwargs", [{"alpha": 1.5}, {"beta": -0.1}, {"season_length": 1}])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        HWParams(**kwargs)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        TimeSeries(0, (1.0, -1.0))


def test_grid_search_prefers_low_error():
    L = 12
    y = additive_series(30.0, 0.1, zero_mean_season(L, 2), 4 * L)
    p = grid_search(y, L)
    assert np.max(np.abs(fit(y, p).one_step_errors)) < 1e-6


@pytest.mark.parametrize("case", load_fixture("arithmetic/forecast_scores.json")["cases"], ids=lambda c: c["name"])
def test_score_matches_hand_arithmetic(case):
    s = score(case["pred"], case["actual"])
    assert s.mae == pytest.approx(case["mae"], abs=1e-12)
    assert s.rmse == pytest.approx(case["rmse"], abs=1e-12)


@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(0.1, 1e3)), min_size=1, max_size=30))
def test_score_matches_oracle(pairs):
    pred, actual = zip(*pairs)
    s = score(pred, actual)
    mae, rmse = normalised_errors(pred, actual)
    assert s.mae == pytest.approx(mae, rel=1e-9, abs=1e-12)
    assert s.rmse == pytest.approx(rmse, rel=1e-9, abs=1e-12)
    assert s.mae <= s.rmse + 1e-12


def test_score_edge_cases():
    assert score([0, 0], [0, 0]).mae == 0
    with pytest.raises(ValueError):
        score([1, 0], [0, 0])
    with pytest.raises(ValueError):
        score([1], [1, 2])


def _series(n_configs, L=8, n=None):
    n = n or 3 * L
    out = {}
    for i in range(n_configs):
        cfg = CallConfig({"DE": i + 1}, "Audio")
        out[cfg] = additive_series(20.0 + i, 0.05 * i, zero_mean_season(L, i), n)
    return out


def test_forecast_many_is_order_and_worker_independent():
    series = _series(6)
    params = HWParams(season_length=8)
    serial = forecast_many(series, params, workers=1)
    shuffled = dict(reversed(list(series.items())))
    parallel = forecast_many(shuffled, params, workers=3)
    assert list(serial) == list(parallel) == sorted(series)
    for k in serial:
        assert np.array_equal(serial[k], parallel[k])


def test_top_k_configs():
    a, b, c = (CallConfig({x: 1}, "Audio") for x in ("DE", "FR", "IT"))
    chosen, cov = top_k_configs({a: 5, b: 10, c: 5}, 2)
    assert chosen == [b, a] and cov == pytest.approx(0.75)


def test_accuracy_report_medians():
    a, b = CallConfig({"DE": 1}, "Audio"), CallConfig({"FR": 1}, "Audio")
    rep = accuracy_report({a: [1, 1], b: [2, 2]}, {a: [1, 1], b: [1, 1]})
    assert rep.per_config[b.key()].mae == pytest.approx(1.0)
    assert rep.median_mae == pytest.approx(0.5)
    assert rep.mae_cdf[-1][1] == 1.0


def test_series_csv_round_trip(tmp_path):
    a = CallConfig({"DE": 2, "FR": 1}, "Video")
    write_series_csv(tmp_path / "s.csv", {a: {0: 1.0, 3: 2.5}}, "c")
    assert read_series_csv(tmp_path / "s.csv") == {a: {0: 1.0, 3: 2.5}}
