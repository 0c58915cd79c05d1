"""Latency/loss measurement analytics: hourly medians, Internet-vs-WAN
difference buckets, the comparable-fraction heatmap, clustering-granularity
deviation, loss timeslot counts and elasticity deltas.

Hours and slots are bucketed on UTC boundaries. Medians are always taken over
the raw samples of a bucket, never over nested medians.
"""

from __future__ import annotations

import csv
import json
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import Route

GRANULARITIES = {
    "country": (),
    "city": ("city",),
    "asn": ("asn",),
    "city+asn": ("city", "asn"),
}


class EmptyResultError(ValueError):
    """No paired (Internet, WAN) data to summarise."""


@dataclass(frozen=True)
class MeasurementRecord:
    timestamp: datetime
    country: str
    dc: str
    route: Route
    rtt_ms: float
    loss_pct: float | None = None
    city: str | None = None
    asn: str | None = None

    def __post_init__(self):
        if not (self.rtt_ms >= 0) or self.rtt_ms == float("inf"):
            raise ValueError(f"rtt_ms must be finite and >= 0, got {self.rtt_ms}")
        if self.loss_pct is not None and not (0 <= self.loss_pct <= 100):
            raise ValueError(f"loss_pct must be in [0, 100], got {self.loss_pct}")

    @property
    def hour(self) -> int:
        return int(self.timestamp.timestamp() // 3600)

    def client(self, granularity: str = "country") -> tuple:
        return (self.country,) + tuple(getattr(self, f) for f in GRANULARITIES[granularity])


@dataclass(frozen=True)
class HourlyAggregate:
    client: tuple
    dc: str
    route: Route
    hour: int
    median_rtt_ms: float
    sample_count: int

    @property
    def country(self) -> str:
        return self.client[0]


@dataclass(frozen=True)
class DiffBucketSummary:
    better: float
    within_10: float
    within_25: float
    worse_25: float
    pairs: int

    def as_list(self) -> list[float]:
        return [self.better, self.within_10, self.within_25, self.worse_25]


@dataclass(frozen=True)
class GranularityEntry:
    country: str
    dc: str
    d: float
    coarse_f: float
    fine_f: tuple[float, ...]
    weights: tuple[float, ...]


def _parse_ts(text: str) -> datetime:
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    return ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)


def read_records(path: str | Path) -> list[MeasurementRecord]:
    """CSV columns: timestamp, country, dc, routing, rtt_ms and optionally
    loss_pct, city, asn."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            loss = row.get("loss_pct")
            out.append(
                MeasurementRecord(
                    timestamp=_parse_ts(row["timestamp"]),
                    country=row["country"],
                    dc=row["dc"],
                    route=Route.parse(row["routing"]),
                    rtt_ms=float(row["rtt_ms"]),
                    loss_pct=float(loss) if loss not in (None, "") else None,
                    city=row.get("city") or None,
                    asn=row.get("asn") or None,
                )
            )
    return out


def write_records(path: str | Path, records: Iterable[MeasurementRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "country", "city", "asn", "dc", "routing", "rtt_ms", "loss_pct"])
        for r in records:
            w.writerow([
                r.timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
                r.country, r.city or "", r.asn or "", r.dc, r.route.value, repr(r.rtt_ms),
                "" if r.loss_pct is None else repr(r.loss_pct),
            ])


def hourly_medians(records: Iterable[MeasurementRecord], granularity: str = "country") -> list[HourlyAggregate]:
    buckets: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        buckets[(r.client(granularity), r.dc, r.route, r.hour)].append(r.rtt_ms)
    out = [
        HourlyAggregate(client, dc, route, hour, statistics.median(v), len(v))
        for (client, dc, route, hour), v in buckets.items()
    ]
    out.sort(key=lambda a: (a.client, a.dc, a.route.value, a.hour))
    return out


def paired_diffs(aggs: Iterable[HourlyAggregate]) -> dict[tuple, list[tuple[int, float]]]:
    """Internet minus WAN median per (client, dc), as (hour, diff) lists.

    Hours that lack either routing option are dropped.
    """
    table: dict[tuple, dict[Route, float]] = defaultdict(dict)
    for a in aggs:
        table[(a.client, a.dc, a.hour)][a.route] = a.median_rtt_ms
    out: dict[tuple, list[tuple[int, float]]] = defaultdict(list)
    for (client, dc, hour), by_route in sorted(table.items()):
        if Route.WAN in by_route and Route.INTERNET in by_route:
            out[(client, dc)].append((hour, by_route[Route.INTERNET] - by_route[Route.WAN]))
    return dict(out)


def classify_diff(diff: float) -> int:
    """Bucket index: 0 strictly better, 1 worse by <=10, 2 by <=25, 3 beyond."""
    if diff < 0:
        return 0
    if diff <= 10:
        return 1
    if diff <= 25:
        return 2
    return 3


def latency_diff_buckets(aggs: Iterable[HourlyAggregate]) -> DiffBucketSummary:
    counts = [0, 0, 0, 0]
    for series in paired_diffs(aggs).values():
        for _, diff in series:
            counts[classify_diff(diff)] += 1
    total = sum(counts)
    if total == 0:
        raise EmptyResultError("no (client, dc, hour) keys with both WAN and Internet medians")
    return DiffBucketSummary(*(c / total for c in counts), pairs=total)


def fraction_f(aggs: Iterable[HourlyAggregate], threshold_ms: float = 10.0) -> dict[tuple, float]:
    """Share of paired hours where Internet is within ``threshold_ms`` of WAN.

    Keyed by (client tuple, dc); for country granularity the client is
    ``(country,)``.
    """
    out = {}
    for key, series in paired_diffs(aggs).items():
        good = sum(1 for _, d in series if d <= threshold_ms)
        out[key] = good / len(series)
    return out


def granularity_diff(fine: Sequence[tuple[float, float]], coarse_f: float) -> float:
    """Weighted relative deviation of fine-grained fractions from the coarse one."""
    if coarse_f <= 0:
        raise ValueError("coarse fraction must be > 0 for the deviation to be defined")
    wsum = sum(w for _, w in fine)
    if abs(wsum - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {wsum}")
    return sum(abs(f - coarse_f) * w for f, w in fine) / coarse_f


def granularity_report(
    records: Sequence[MeasurementRecord], granularity: str = "city+asn", threshold_ms: float = 10.0
) -> list[GranularityEntry]:
    """Deviation of fine-grained F from country-level F per (country, dc).

    Weights are each fine cluster's share of that (country, dc)'s raw
    measurements, restricted to clusters with at least one paired hour and
    renormalised. Pairs whose country-level F is 0 are skipped.
    """
    if granularity == "country":
        raise ValueError("fine granularity must differ from country")
    coarse = fraction_f(hourly_medians(records, "country"), threshold_ms)
    fine = fraction_f(hourly_medians(records, granularity), threshold_ms)
    counts: dict[tuple, int] = defaultdict(int)
    for r in records:
        counts[(r.client(granularity), r.dc)] += 1

    grouped: dict[tuple[str, str], list[tuple[float, int]]] = defaultdict(list)
    for (client, dc), f in fine.items():
        grouped[(client[0], dc)].append((f, counts[(client, dc)]))

    out = []
    for (country, dc), comps in sorted(grouped.items()):
        fc = coarse.get(((country,), dc))
        if not fc:
            continue
        total = sum(n for _, n in comps)
        fs = tuple(f for f, _ in comps)
        ws = tuple(n / total for _, n in comps)
        out.append(GranularityEntry(country, dc, granularity_diff(list(zip(fs, ws)), fc), fc, fs, ws))
    return out


def loss_timeslot_counts(
    records: Iterable[MeasurementRecord], threshold_pct: float, slot_minutes: int = 30
) -> dict[tuple[str, str, Route], int]:
    """Number of slots whose median loss is at least ``threshold_pct``.

    Every (country, dc, route) that has any loss samples appears, possibly
    with a zero count.
    """
    slot_seconds = slot_minutes * 60
    buckets: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        if r.loss_pct is None:
            continue
        slot = int(r.timestamp.timestamp() // slot_seconds)
        buckets[(r.country, r.dc, r.route, slot)].append(r.loss_pct)
    out: dict[tuple[str, str, Route], int] = {}
    for (country, dc, route, _), v in sorted(buckets.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].value, kv[0][3])):
        key = (country, dc, route)
        out[key] = out.get(key, 0) + (statistics.median(v) >= threshold_pct)
    return out


def elasticity_deltas(
    before: Iterable[MeasurementRecord], after: Iterable[MeasurementRecord], route: Route = Route.INTERNET
) -> dict[tuple[str, str], tuple[float, float | None]]:
    """Change in median latency and median loss per (country, dc) between a
    low-offload and a high-offload period.

    Loss delta is None when either period has no loss samples.
    """

    def summarise(rs):
        lat: dict[tuple, list[float]] = defaultdict(list)
        loss: dict[tuple, list[float]] = defaultdict(list)
        for r in rs:
            if r.route is not route:
                continue
            lat[(r.country, r.dc)].append(r.rtt_ms)
            if r.loss_pct is not None:
                loss[(r.country, r.dc)].append(r.loss_pct)
        return lat, loss

    lat0, loss0 = summarise(before)
    lat1, loss1 = summarise(after)
    out = {}
    for key in sorted(set(lat0) & set(lat1)):
        dl = statistics.median(lat1[key]) - statistics.median(lat0[key])
        dloss = None
        if loss0.get(key) and loss1.get(key):
            dloss = statistics.median(loss1[key]) - statistics.median(loss0[key])
        out[key] = (dl, dloss)
    return out


def write_f_matrix(path: str | Path, fmap: Mapping[tuple, float], comment: str | None = None) -> None:
    """Country x dc matrix of F for heatmap plotting; blanks where unpaired."""
    rows = sorted({k[0][0] if isinstance(k[0], tuple) else k[0] for k in fmap})
    cols = sorted({k[1] for k in fmap})
    lookup = {((k[0][0] if isinstance(k[0], tuple) else k[0]), k[1]): v for k, v in fmap.items()}
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country"] + cols)
        for r in rows:
            w.writerow([r] + [("" if (r, c) not in lookup else repr(lookup[(r, c)])) for c in cols])


def analyze(records: Sequence[MeasurementRecord], threshold_ms: float = 10.0) -> dict:
    """Everything the CLI reports, as a JSON-ready dict."""
    aggs = hourly_medians(records)
    summary: dict = {"records": len(records), "hourly_aggregates": len(aggs)}
    try:
        summary["diff_buckets"] = asdict(latency_diff_buckets(aggs))
    except EmptyResultError as exc:
        summary["diff_buckets"] = {"error": str(exc)}
    summary["fraction_f"] = [
        {"country": k[0][0], "dc": k[1], "f": v} for k, v in fraction_f(aggs, threshold_ms).items()
    ]
    gran = {}
    for g in ("city", "asn", "city+asn"):
        if any(getattr(r, f) for r in records for f in GRANULARITIES[g]):
            gran[g] = [asdict(e) for e in granularity_report(records, g, threshold_ms)]
    summary["granularity"] = gran
    for thr in (0.1, 1.0):
        counts = loss_timeslot_counts(records, thr)
        summary[f"loss_slots_ge_{thr}"] = [
            {"country": c, "dc": d, "route": r.value, "slots": n} for (c, d, r), n in counts.items()
        ]
    return summary


def dump_summary(path: str | Path, summary: Mapping) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
