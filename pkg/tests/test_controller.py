from __future__ import annotations

import random
import time
from collections import Counter
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import two_dc_topology
from confroute.controller import (
    Decision,
    LiveCall,
    PlanController,
    RecentRccCache,
    UnplannedConfig,
    converge_and_migrate,
    handle_surge,
    initial_assign,
    latency_threshold_ms,
    plan_target,
    read_decisions,
    runtime_route_fallback,
    write_decisions,
)
from confroute.model import CallConfig, CallRecord, MediaType, ResourceModel, Route
from confroute.planner import Plan
from confroute.policy import NoCapacityError, SimContext

T0 = datetime(2024, 6, 3, tzinfo=timezone.utc)
W, I = Route.WAN, Route.INTERNET
FR1 = CallConfig({"FR": 1}, "Audio")
FR1V = CallConfig({"FR": 1}, "Video")


def make_plan(entries) -> Plan:
    return Plan("Optimal", {(t, c, m, p): v for (t, c, m, p, v) in entries}, {}, 0.0)


PLAN = make_plan([(0, FR1, "m-fr", W, 6.0), (0, FR1, "m-de", I, 3.0), (0, FR1, "m-de", W, 1.0),
                  (0, FR1V, "m-de", W, 2.0)])


def live(dc="m-fr", route=W):
    return LiveCall("c1", ["FR"], MediaType.AUDIO, dc, route, T0)


def test_initial_assign_follows_plan_weights():
    rng = random.Random(3)
    cache = RecentRccCache()
    counts = Counter(initial_assign("FR", PLAN, 0, cache, rng) for _ in range(40_000))
    total = sum(counts.values())
    assert counts[("m-fr", W)] / total == pytest.approx(0.6, abs=0.01)
    assert counts[("m-de", I)] / total == pytest.approx(0.3, abs=0.01)
    assert counts[("m-de", W)] / total == pytest.approx(0.1, abs=0.01)


def test_initial_assign_is_seed_deterministic():
    a = [initial_assign("FR", PLAN, 0, RecentRccCache(), random.Random(9)) for _ in range(5)]
    b = [initial_assign("FR", PLAN, 0, RecentRccCache(), random.Random(9)) for _ in range(5)]
    assert a == b


def test_initial_assign_raises_on_unplanned_config():
    with pytest.raises(UnplannedConfig):
        initial_assign("DE", PLAN, 0, RecentRccCache(), random.Random(0))


def test_initial_assign_is_fast():
    rng, cache = random.Random(0), RecentRccCache()
    t0 = time.perf_counter()
    for _ in range(20_000):
        initial_assign("FR", PLAN, 0, cache, rng)
    assert (time.perf_counter() - t0) / 20_000 < 1e-3


def test_cache_defaults_and_observes_intra_country_only():
    cache = RecentRccCache(reduced=True)
    assert cache.get("FR") == FR1
    cache.observe(CallConfig({"FR": 4}, "Video"))
    assert cache.get("FR") == FR1V
    cache.observe(CallConfig({"FR": 2, "DE": 1}, "Audio"))
    assert cache.get("FR") == FR1V and len(cache) == 1
    raw = RecentRccCache(reduced=False)
    raw.observe(CallConfig({"FR": 4}, "Video"))
    assert raw.get("FR") == CallConfig({"FR": 4}, "Video")


def test_plan_target_tie_breaks():
    assert plan_target({("m-fr", W): 1.0, ("m-de", I): 1.0, ("m-de", W): 1.0}) == ("m-de", W)
    assert plan_target({("m-fr", W): 1.0, ("m-de", I): 2.0}) == ("m-de", I)


def test_no_migration_when_current_option_has_weight():
    call = live("m-de", I)
    assert converge_and_migrate(call, PLAN, 0, CallConfig({"FR": 3}, "Audio")) is None
    assert call.converged and (call.dc, call.route) == ("m-de", I)


def test_migrate_to_top_option_on_zero_weight():
    call = live("m-fr", I)
    ev = converge_and_migrate(call, PLAN, 0, FR1)
    assert ev.kind == "routeOnly" and (ev.to_dc, ev.to_route) == ("m-fr", W)
    call = live("m-fr", W)
    ev = converge_and_migrate(call, PLAN, 0, CallConfig({"FR": 2}, "Video"))
    assert ev.kind == "interDc" and (call.dc, call.route) == ("m-de", W)


def test_argmax_strictness_moves_off_minor_options():
    call = live("m-de", I)
    ev = converge_and_migrate(call, PLAN, 0, FR1, strictness="argmax")
    assert ev is not None and (call.dc, call.route) == ("m-fr", W)
    with pytest.raises(ValueError):
        converge_and_migrate(live(), PLAN, 0, FR1, strictness="sometimes")


def test_unplanned_true_config_stays_put():
    call = live()
    assert converge_and_migrate(call, PLAN, 0, CallConfig({"IT": 1}, "Audio")) is None
    assert call.unplanned


def test_raw_plans_do_not_reduce():
    raw = make_plan([(0, CallConfig({"FR": 2}, "Audio"), "m-de", W, 1.0)])
    call = live("m-fr", W)
    assert converge_and_migrate(call, raw, 0, CallConfig({"FR": 2}, "Audio"), reduced=False).to_dc == "m-de"
    call = live("m-fr", W)
    assert converge_and_migrate(call, raw, 0, CallConfig({"FR": 2}, "Audio"), reduced=True) is None


def test_override_only_moves_internet_to_wan():
    c = live("m-fr", I)
    c.override("FR")
    assert c.overrides == {"FR": W}
    c = live("m-fr", W)
    c.override("FR")
    assert c.overrides == {}


def test_handle_surge_prefers_nearest_with_capacity():
    topo = two_dc_topology()
    assert handle_surge("FR", topo, {"m-fr": 5.0, "m-de": 5.0}, 1.0) == "m-fr"
    assert handle_surge("FR", topo, {"m-fr": 0.5, "m-de": 5.0}, 1.0) == "m-de"
    with pytest.raises(NoCapacityError):
        handle_surge("FR", topo, {"m-fr": 0.5, "m-de": 0.5}, 1.0)


@pytest.mark.parametrize("loss,lat,km,expected", [
    (1.0, 10, 0, W), (0.99, 10, 0, None), (0.0, 60.0, 100, None), (0.0, 60.01, 100, W),
    (0.0, 89.0, 6000, None), (0.0, 91.0, 6000, W),
])
def test_runtime_fallback(loss, lat, km, expected):
    assert runtime_route_fallback(loss, lat, km) == expected


def test_runtime_fallback_ignores_wan_and_threshold_floor():
    assert runtime_route_fallback(5.0, 500, 0, current=W) is None
    assert latency_threshold_ms(0) == 60.0 and latency_threshold_ms(8000) == pytest.approx(120.0)


def _call(cid, joins, media="Audio", slot=0):
    return CallRecord(cid, T0, tuple((T0 + timedelta(seconds=s), c) for s, c in joins), MediaType.parse(media), slot)


def _ctx(mode):
    topo = two_dc_topology()
    return SimContext(topo, ResourceModel.default(), mode, compute_left={(0, "m-fr"): 10.0, (0, "m-de"): 10.0})


def test_controller_first_joiner_flow():
    ctl = PlanController(PLAN, seed=1)
    ctx = _ctx("first-joiner")
    # true config only known after the wait: video with two FR participants
    call = _call("v", [(0, "FR"), (60, "FR")], "Video")
    choice = ctl.assign(call, ctx)
    target = ctl.converge(call, choice, ctx)
    final = target or choice
    assert final == ("m-de", W)
    assert ctl.cache.get("FR") == FR1V


def test_controller_reveal_mode_never_migrates():
    ctl = PlanController(PLAN, seed=1)
    ctx = _ctx("reveal")
    for i in range(50):
        call = _call(f"c{i}", [(0, "FR"), (30, "FR")], "Video" if i % 2 else "Audio")
        choice = ctl.assign(call, ctx)
        assert ctl.converge(call, choice, ctx) is None
    assert ctl.migrations == []


def test_controller_surges_unplanned_configs_to_wan():
    ctl = PlanController(PLAN, seed=1)
    ctx = _ctx("first-joiner")
    call = _call("x", [(0, "DE")])
    assert ctl.assign(call, ctx) == ("m-de", W)
    assert ctl.surges == 1


def test_controller_wait_window_limits_observed_joiners():
    ctl = PlanController(PLAN, wait_minutes=1, seed=1)
    ctx = _ctx("first-joiner")
    call = _call("late", [(0, "FR"), (600, "DE")])
    ctl.assign(call, ctx)
    ctl.converge(call, ("m-fr", W), ctx)
    # the DE joiner arrived after the window so the intra-country config was observed
    assert ctl.cache.get("FR") == FR1


def test_decision_log_round_trip(tmp_path):
    ds = [Decision(T0, "c1", "assign", "m-fr", "WAN", ""), Decision(T0 + timedelta(minutes=5), "c1", "migrate",
                                                                       "m-de", "Internet", "interDc from m-fr/WAN")]
    write_decisions(tmp_path / "d.csv", ds, "manifest {}")
    assert read_decisions(tmp_path / "d.csv") == ds


@given(st.dictionaries(st.tuples(st.sampled_from(["a", "b", "c"]), st.sampled_from([W, I])),
                       st.floats(0.01, 100), min_size=1))
def test_zero_weight_rule_never_moves_a_weighted_call(alloc):
    plan = make_plan([(0, FR1, m, p, v) for (m, p), v in alloc.items()])
    for (m, p) in alloc:
        call = live(m, p)
        assert converge_and_migrate(call, plan, 0, FR1) is None
    call = live("zz", W)
    ev = converge_and_migrate(call, plan, 0, FR1)
    assert ev is not None and (ev.to_dc, ev.to_route) == plan_target(alloc)
