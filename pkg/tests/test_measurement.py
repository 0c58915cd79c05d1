from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, load_fixture
from fixtures.oracles import counting
from confroute.measurement import (
    EmptyResultError,
    MeasurementRecord,
    analyze,
    classify_diff,
    elasticity_deltas,
    fraction_f,
    granularity_diff,
    granularity_report,
    hourly_medians,
    latency_diff_buckets,
    loss_timeslot_counts,
    read_records,
    write_f_matrix,
    write_records,
)
from confroute.model import Route

T0 = datetime(2024, 6, 3, tzinfo=timezone.utc)
FILES = ["measurement/records_1.csv", "measurement/records_2.csv", "measurement/records_3.csv"]


def rec(hour, country, dc, route, rtt, loss=None, minute=0, city=None, asn=None):
    return MeasurementRecord(T0 + timedelta(hours=hour, minutes=minute), country, dc, Route.parse(route), rtt, loss, city, asn)


@pytest.mark.parametrize("rel", FILES)
def test_bucket_fractions_match_oracle(rel):
    expected = load_fixture("measurement/expected.json")["files"][rel]
    s = latency_diff_buckets(hourly_medians(read_records(FIXTURES / rel)))
    assert sum(s.as_list()) == pytest.approx(1.0, abs=1e-12)
    assert s.as_list() == pytest.approx(expected["buckets"], abs=1e-12)


@pytest.mark.parametrize("rel", FILES)
def test_fraction_f_matches_oracle(rel):
    expected = load_fixture("measurement/expected.json")["files"][rel]
    got = fraction_f(hourly_medians(read_records(FIXTURES / rel)))
    want = {((e["country"],), e["dc"]): e["f"] for e in expected["fraction_f"]}
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


@pytest.mark.parametrize("rel", FILES)
def test_granularity_d_matches_oracle(rel):
    expected = load_fixture("measurement/expected.json")["files"][rel]
    got = {(e.country, e.dc): e.d for e in granularity_report(read_records(FIXTURES / rel), "city+asn")}
    want = {(e["country"], e["dc"]): e["d"] for e in expected["d_city_asn"]}
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


def test_published_granularity_example():
    ex = load_fixture("published/examples.json")["granularity"]
    d = granularity_diff(list(zip(ex["fine_f"], ex["weights"])), ex["coarse_f"])
    assert d == pytest.approx(ex["expected_d"], abs=1e-12)
    assert d == pytest.approx(1 / 7, abs=1e-12)


def test_granularity_diff_validation():
    with pytest.raises(ValueError):
        granularity_diff([(0.5, 1.0)], 0.0)
    with pytest.raises(ValueError):
        granularity_diff([(0.5, 0.4)], 0.5)


def test_hand_buckets_and_f():
    # hour 0: diff -5 (better); hour 1: diff 10 (within 10); hour 2: diff 20; hour 3: diff 30; hour 4 unpaired
    rows = []
    for h, d in enumerate([-5, 10, 20, 30]):
        rows += [rec(h, "FR", "a", "WAN", 40), rec(h, "FR", "a", "Internet", 40 + d)]
    rows.append(rec(4, "FR", "a", "WAN", 40))
    aggs = hourly_medians(rows)
    s = latency_diff_buckets(aggs)
    assert s.as_list() == [0.25, 0.25, 0.25, 0.25] and s.pairs == 4
    assert fraction_f(aggs) == {(("FR",), "a"): 0.5}


def test_medians_use_raw_samples():
    rows = [rec(0, "FR", "a", "WAN", v, minute=i) for i, v in enumerate([1, 2, 100])]
    (agg,) = hourly_medians(rows)
    assert agg.median_rtt_ms == 2 and agg.sample_count == 3


def test_hour_boundary_is_utc():
    rows = [rec(0, "FR", "a", "WAN", 10, minute=59), rec(1, "FR", "a", "WAN", 30, minute=0)]
    assert [a.hour for a in hourly_medians(rows)] == [rows[0].hour, rows[0].hour + 1]


@pytest.mark.parametrize("diff,bucket", [(-0.01, 0), (0, 1), (10, 1), (10.01, 2), (25, 2), (25.01, 3)])
def test_bucket_edges(diff, bucket):
    assert classify_diff(diff) == bucket


def test_empty_pairs_raise():
    with pytest.raises(EmptyResultError):
        latency_diff_buckets(hourly_medians([rec(0, "FR", "a", "WAN", 10)]))


@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(["WAN", "Internet"]), st.floats(0, 300)),
                min_size=1, max_size=60))
def test_bucket_fractions_always_sum_to_one(samples):
    rows = [rec(h, "FR", "a", r, v) for h, r, v in samples]
    aggs = hourly_medians(rows)
    try:
        s = latency_diff_buckets(aggs)
    except EmptyResultError:
        return
    assert sum(s.as_list()) == pytest.approx(1.0)
    assert all(0 <= f <= 1 for f in fraction_f(aggs).values())


def test_record_validation():
    with pytest.raises(ValueError):
        rec(0, "FR", "a", "WAN", -1)
    with pytest.raises(ValueError):
        rec(0, "FR", "a", "WAN", 1, loss=101)


def test_loss_timeslot_counts():
    rows = [
        rec(0, "FR", "a", "Internet", 10, loss=2.0, minute=1),
        rec(0, "FR", "a", "Internet", 10, loss=0.0, minute=2),
        rec(0, "FR", "a", "Internet", 10, loss=1.5, minute=3),  # slot median 1.5
        rec(0, "FR", "a", "Internet", 10, loss=0.0, minute=40),  # next slot, median 0
        rec(0, "FR", "a", "WAN", 10, loss=0.0),
    ]
    counts = loss_timeslot_counts(rows, 1.0)
    assert counts[("FR", "a", Route.INTERNET)] == 1
    assert counts[("FR", "a", Route.WAN)] == 0


def test_elasticity_deltas():
    before = [rec(0, "FR", "a", "Internet", 20, 0.1), rec(0, "FR", "a", "Internet", 30, 0.3)]
    after = [rec(5, "FR", "a", "Internet", 40, 0.5), rec(5, "DE", "a", "Internet", 40)]
    assert elasticity_deltas(before, after) == {("FR", "a"): (15.0, pytest.approx(0.3))}


def test_records_round_trip_and_matrix(tmp_path):
    rows = read_records(FIXTURES / FILES[0])
    write_records(tmp_path / "r.csv", rows)
    assert read_records(tmp_path / "r.csv") == rows
    write_f_matrix(tmp_path / "f.csv", fraction_f(hourly_medians(rows)), "note")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# note"
    header = next(csv.reader([lines[1]]))
    assert header == ["country", "dc-a", "dc-b"]


def test_analyze_summary_shape():
    summary = analyze(read_records(FIXTURES / FILES[1]))
    assert sum(summary["diff_buckets"][k] for k in ("better", "within_10", "within_25", "worse_25")) == pytest.approx(1)
    assert set(summary["granularity"]) == {"city", "asn", "city+asn"}
    assert "loss_slots_ge_1.0" in summary


def test_counting_oracle_agrees_with_granularity_helper():
    # the oracle's own weighted difference on the published example
    assert counting.weighted_difference([(0.8, 0.5), (0.6, 0.5)], 0.7) == pytest.approx(1 / 7)
