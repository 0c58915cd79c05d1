"""Rebuild every computed fixture from the oracles in this directory.

    python -m fixtures.oracles.regenerate            # rewrite files
    python -m fixtures.oracles.regenerate --check    # list differences only

(run from the ``tests`` directory). Output is byte-stable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from . import counting
from .instances import DEFAULT_RESOURCES, tiny_problem
from .lp_enum import enumerate_optimum

FIXTURES = Path(__file__).resolve().parent.parent


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- planning -----------------------------------------------------------------------


def tiny_planning_problem() -> dict:
    """Two countries, two dcs, one shared link; the French dc is short on
    cores in slot 0 so one video call has to leave it."""
    lat = {
        ("FR", "m-fr"): (10, 15), ("FR", "m-de"): (25, 22),
        ("DE", "m-de"): (10, 14), ("DE", "m-fr"): (28, 30),
    }
    return {
        "topology": {
            "countries": ["DE", "FR"],
            "dcs": [{"id": "m-de", "country": "DE"}, {"id": "m-fr", "country": "FR"}],
            "wan_links": [
                {"id": "DE-FR", "endpoints": ["DE", "FR"], "capacity_gbps": None},
                {"id": "FR-core", "endpoints": ["FR", "FR"], "capacity_gbps": None},
            ],
            "wan_routes": [
                {"country": "DE", "dc": "m-de", "links": []},
                {"country": "DE", "dc": "m-fr", "links": ["DE-FR", "FR-core"]},
                {"country": "FR", "dc": "m-de", "links": ["DE-FR"]},
                {"country": "FR", "dc": "m-fr", "links": []},
            ],
            "latency_ms": [
                {"country": c, "dc": m, "route": r, "ms": v}
                for (c, m), (w, i) in sorted(lat.items())
                for r, v in (("Internet", i), ("WAN", w))
            ],
            "internet_cap_gbps": [],
            "distance_km": [],
        },
        "resources": DEFAULT_RESOURCES,
        "slots": [0, 1],
        "configs": ["DE-1+FR-1|Audio", "FR-1|Video"],
        "dcs": ["m-de", "m-fr"],
        "routes": ["WAN", "Internet"],
        "demand": [
            {"slot": 0, "config": "DE-1+FR-1|Audio", "calls": 2},
            {"slot": 0, "config": "FR-1|Video", "calls": 3},
            {"slot": 1, "config": "DE-1+FR-1|Audio", "calls": 2},
            {"slot": 1, "config": "FR-1|Video", "calls": 1},
        ],
        "compute_cap": [
            {"slot": t, "dc": m, "cores": 1.0} for t in (0, 1) for m in ("m-de", "m-fr")
        ],
        "internet_cap_gbps": [
            {"slot": 0, "dc": "m-de", "gbps": 0.0025},
            {"slot": 0, "dc": "m-fr", "gbps": 0.0},
            {"slot": 1, "dc": "m-de", "gbps": 0.0},
            {"slot": 1, "dc": "m-fr", "gbps": 0.0},
        ],
        "e_bound_ms": 75.0,
    }


def tight_latency_problem() -> dict:
    """One dc 25 ms from the only country on both routes: every call's max
    end-to-end latency is 50 ms, so a 40 ms bound cannot be met."""
    return {
        "topology": {
            "countries": ["XX"],
            "dcs": [{"id": "solo", "country": "XX"}],
            "wan_links": [{"id": "l0", "endpoints": ["XX", "XX"], "capacity_gbps": None}],
            "wan_routes": [{"country": "XX", "dc": "solo", "links": ["l0"]}],
            "latency_ms": [
                {"country": "XX", "dc": "solo", "route": "Internet", "ms": 25},
                {"country": "XX", "dc": "solo", "route": "WAN", "ms": 25},
            ],
            "internet_cap_gbps": [],
            "distance_km": [],
        },
        "resources": DEFAULT_RESOURCES,
        "slots": [0],
        "configs": ["XX-2|Audio"],
        "dcs": ["solo"],
        "routes": ["WAN", "Internet"],
        "demand": [{"slot": 0, "config": "XX-2|Audio", "calls": 4}],
        "compute_cap": [{"slot": 0, "dc": "solo", "cores": 10.0}],
        "internet_cap_gbps": [{"slot": 0, "dc": "solo", "gbps": 1.0}],
        "e_bound_ms": 40.0,
    }


def planning_files() -> dict[str, str]:
    tiny = tiny_planning_problem()
    best = enumerate_optimum(tiny)
    golden = {
        "origin": "derived",
        "oracle": "lp_enum.enumerate_optimum (exhaustive integer search; the LP optimum is unique and integral)",
        "status": best["status"],
        "objective": best["objective"],
        "x": [
            {"slot": t, "config": c, "dc": m, "route": p, "calls": v}
            for t, c, m, p, v in sorted(best["assignment"])
        ],
    }
    tight = tight_latency_problem()
    cases = []
    for seed in range(6):
        prob = tiny_problem(seed)
        res = enumerate_optimum(prob)
        cases.append({"seed": seed, "problem": prob, "status": res["status"], "objective": res["objective"]})
    return {
        "planning/tiny_problem.json": _json(tiny),
        "planning/tiny_plan_golden.json": _json(golden),
        "planning/tight_latency.json": _json(tight),
        "planning/tight_latency_expected.json": _json(
            {"origin": "derived", "oracle": "lp_enum.enumerate_optimum", "status": enumerate_optimum(tight)["status"],
             "min_avg_e2e_ms": 50.0}
        ),
        "planning/enum_cases.json": _json(
            {"origin": "derived", "oracle": "lp_enum.enumerate_optimum", "cases": cases}
        ),
    }


# -- measurement --------------------------------------------------------------------


def measurement_rows(seed: int) -> list[dict]:
    rng = random.Random(seed)
    t0 = datetime(2024, 6, 3, tzinfo=timezone.utc)
    rows = []
    clusters = {"FR": [("Paris", "AS1"), ("Lyon", "AS2")], "DE": [("Berlin", "AS3"), ("Munich", "AS3"), ("Bonn", "AS4")]}
    for hour in range(24):
        for country, cl in clusters.items():
            for dc in ("dc-a", "dc-b"):
                for routing in ("WAN", "Internet"):
                    if rng.random() < 0.08:
                        continue  # leave some hours unpaired
                    for city, asn in cl:
                        for _ in range(rng.randint(1, 3)):
                            base = 30 + 10 * (dc == "dc-b") + (country == "DE") * 5
                            extra = rng.choice([-8, -2, 0, 4, 9, 12, 20, 30]) if routing == "Internet" else 0
                            ts = t0 + timedelta(hours=hour, minutes=rng.randint(0, 59), seconds=rng.randint(0, 59))
                            rows.append({
                                "timestamp": ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
                                "country": country, "city": city, "asn": asn, "dc": dc, "routing": routing,
                                "rtt_ms": float(base + extra + rng.randint(0, 6)),
                                "loss_pct": round(rng.choice([0.0, 0.0, 0.05, 0.2, 1.5]), 2),
                            })
    rows.sort(key=lambda r: (r["timestamp"], r["country"], r["city"], r["dc"], r["routing"]))
    return rows


COLUMNS = ("timestamp", "country", "city", "asn", "dc", "routing", "rtt_ms", "loss_pct")


def measurement_files() -> dict[str, str]:
    files, expected = {}, {}
    for seed in (1, 2, 3):
        rows = measurement_rows(seed)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        name = f"measurement/records_{seed}.csv"
        files[name] = buf.getvalue()
        f = counting.fractions_f(rows)
        d = counting.granularity_d(rows, ("city", "asn"))
        expected[name] = {
            "buckets": counting.bucket_fractions(rows),
            "fraction_f": [{"country": k[0][0], "dc": k[1], "f": v} for k, v in sorted(f.items())],
            "d_city_asn": [{"country": k[0], "dc": k[1], "d": v} for k, v in sorted(d.items())],
        }
    files["measurement/expected.json"] = _json(
        {"origin": "derived", "oracle": "counting.bucket_fractions / fractions_f / granularity_d", "files": expected}
    )
    return files


# -- small arithmetic fixtures ---------------------------------------------------------


def arithmetic_files() -> dict[str, str]:
    cores3 = {"a": 12000.0, "b": 6000.0, "c": 9000.0}
    fr3 = {"X|a": 0.1, "Y|a": 0.3, "X|b": 0.0, "Y|b": 0.2, "X|c": 0.25, "Y|c": 0.15}
    wrr = {
        "cases": [
            {"name": "published 2-dc example", "origin": "published-example", "cores": {"dc1": 10000.0, "dc2": 20000.0},
             "fractions": {"XX|dc1": 0.2, "XX|dc2": 0.15}, "countries": ["XX"],
             "expected": [8000.0, 2000.0, 17000.0, 3000.0]},
            {"name": "3-dc two-country", "origin": "derived", "oracle": "counting.wrr_weights",
             "cores": cores3, "fractions": fr3, "countries": ["X", "Y"],
             "expected": counting.wrr_weights(cores3, fr3, ["X", "Y"])},
        ]
    }
    prios = {"A": 4.0, "B": 3.0, "C": 2.0, "D": 1.0}
    alloc = {"origin": "derived", "oracle": "counting.proportional_split", "cap_gbps": 12.5, "priorities": prios,
             "expected": counting.proportional_split(12.5, prios)}
    rng = random.Random(7)
    actual = [float(rng.randint(0, 50)) for _ in range(12)]
    actual[3] = 60.0
    pred = [a + rng.choice([-4.0, -1.0, 0.0, 2.0, 5.0]) for a in actual]
    mae, rmse = counting.normalised_errors(pred, actual)
    scores = {
        "cases": [
            {"name": "perfect", "pred": [1.0, 2.0, 3.0], "actual": [1.0, 2.0, 3.0], "mae": 0.0, "rmse": 0.0},
            {"name": "constant error 5, peak 100", "pred": [15.0, 55.0, 105.0, 45.0],
             "actual": [10.0, 50.0, 100.0, 40.0], "mae": 0.05, "rmse": 0.05},
            {"name": "seeded mixed errors", "origin": "derived", "oracle": "counting.normalised_errors",
             "pred": pred, "actual": actual, "mae": mae, "rmse": rmse},
        ]
    }
    return {
        "arithmetic/wrr_cases.json": _json(wrr),
        "arithmetic/allocate_cases.json": _json(alloc),
        "arithmetic/forecast_scores.json": _json(scores),
    }


def all_files() -> dict[str, str]:
    out = {}
    out.update(planning_files())
    out.update(measurement_files())
    out.update(arithmetic_files())
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="report differences without writing")
    args = ap.parse_args(argv)
    diffs = []
    for rel, text in sorted(all_files().items()):
        path = FIXTURES / rel
        current = path.read_text() if path.exists() else None
        if current != text:
            diffs.append(rel)
            if not args.check:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text)
    for rel in diffs:
        print(("differs: " if args.check else "wrote: ") + rel)
    return 1 if (args.check and diffs) else 0


if __name__ == "__main__":
    sys.exit(main())
