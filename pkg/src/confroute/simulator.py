"""Slot-granular simulation of call assignment policies.

:func:`gen_trace` synthesises call records from a seeded workload spec.
:func:`run` drives a policy over a trace, charging each call's bandwidth to
WAN links (or DC Internet egress) for every slot it is active, and
:func:`metrics` turns the resulting decision log and usage into a report.
"""

from __future__ import annotations

import csv
import json
import math
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .controller import Decision, runtime_route_fallback
from .model import (
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    CallRecord,
    MediaType,
    ResourceModel,
    Route,
    Topology,
    compute_used,
    max_e2e_from_latencies,
)
from .policy import NoCapacityError, Policy, SimContext

SLOT_SECONDS = SLOT_MINUTES * 60
DEFAULT_START = datetime(2024, 6, 3, tzinfo=timezone.utc)  # a Monday


def mbps_slots_to_mb(mbps: float) -> float:
    """Megabytes carried by ``mbps`` sustained over one slot."""
    return mbps * SLOT_SECONDS / 8.0


# -- workload ---------------------------------------------------------------------


def default_profile(weekend_scale: float = 0.35) -> tuple[float, ...]:
    """Weekly intensity per slot (UTC): a morning and an afternoon peak on
    weekdays, a flatter and lower weekend."""
    s = np.arange(SLOTS_PER_DAY)
    day = 0.08 + np.exp(-0.5 * ((s - 19) / 3.0) ** 2) + 0.9 * np.exp(-0.5 * ((s - 28) / 4.0) ** 2)
    week = [day * (weekend_scale if d >= 5 else 1.0) for d in range(7)]
    return tuple(float(v) for v in np.concatenate(week))


@dataclass(frozen=True)
class SyntheticWorkloadSpec:
    """Seeded description of a synthetic call trace.

    ``country_offsets`` shifts a country's daily profile by whole slots
    (time zones); ``duration_slots`` maps call length in slots to its
    probability.
    """

    seed: int
    countries: Mapping[str, float]
    calls_per_day: int
    days: int = 1
    zipf_exponent: float = 1.8
    max_participants: int = 8
    international_prob: float = 0.2
    media_mix: Mapping[MediaType, float] = field(
        default_factory=lambda: {MediaType.AUDIO: 0.5, MediaType.SCREEN_SHARE: 0.2, MediaType.VIDEO: 0.3}
    )
    profile: tuple[float, ...] = field(default_factory=default_profile)
    join_spread_minutes: float = 4.0
    duration_slots: Mapping[int, float] = field(default_factory=lambda: {1: 1.0})
    country_offsets: Mapping[str, int] = field(default_factory=dict)
    start: datetime = DEFAULT_START

    def __post_init__(self):
        if not self.countries or any(w <= 0 for w in self.countries.values()):
            raise ValueError("country weights must be positive")
        if any(w <= 0 for w in self.media_mix.values()):
            raise ValueError("media weights must be positive")
        if any(w <= 0 for w in self.duration_slots.values()) or any(d < 1 for d in self.duration_slots):
            raise ValueError("duration weights must be positive and durations >= 1 slot")
        if len(self.profile) != SLOTS_PER_WEEK:
            raise ValueError(f"profile must have {SLOTS_PER_WEEK} slots, got {len(self.profile)}")
        if any(v < 0 for v in self.profile) or sum(self.profile) <= 0:
            raise ValueError("profile must be non-negative and not all zero")
        if self.calls_per_day < 0 or self.days < 0:
            raise ValueError("calls_per_day and days must be >= 0")
        if self.max_participants < 2:
            raise ValueError("max_participants must be >= 2")
        if not 0.0 <= self.international_prob <= 1.0:
            raise ValueError("international_prob must be within [0, 1]")
        if self.international_prob > 0 and len(self.countries) < 2:
            raise ValueError("international calls need at least two countries")
        if not 0.0 <= self.join_spread_minutes < SLOT_MINUTES:
            raise ValueError("join spread must be within [0, slot length)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["media_mix"] = {m.label: w for m, w in self.media_mix.items()}
        d["duration_slots"] = {str(k): v for k, v in self.duration_slots.items()}
        d["start"] = self.start.isoformat()
        d["profile"] = list(self.profile)
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticWorkloadSpec":
        d = dict(data)
        if "media_mix" in d:
            d["media_mix"] = {MediaType.parse(k): float(v) for k, v in d["media_mix"].items()}
        if "duration_slots" in d:
            d["duration_slots"] = {int(k): float(v) for k, v in d["duration_slots"].items()}
        if "start" in d:
            d["start"] = datetime.fromisoformat(d["start"])
        if "profile" in d:
            d["profile"] = tuple(d["profile"])
        return cls(**d)


def _zipf_weights(lo: int, hi: int, s: float) -> np.ndarray:
    k = np.arange(lo, hi + 1, dtype=float)
    w = k**-s
    return w / w.sum()


def gen_trace(spec: SyntheticWorkloadSpec) -> list[CallRecord]:
    """Deterministic trace for ``spec``; per-day totals are exact."""
    rng = np.random.default_rng(spec.seed)
    countries = sorted(spec.countries)
    pop = np.array([spec.countries[c] for c in countries], dtype=float)
    pop /= pop.sum()
    media = sorted(spec.media_mix)
    media_p = np.array([spec.media_mix[m] for m in media], dtype=float)
    media_p /= media_p.sum()
    durations = sorted(spec.duration_slots)
    dur_p = np.array([spec.duration_slots[d] for d in durations], dtype=float)
    dur_p /= dur_p.sum()
    size_intra = _zipf_weights(2, spec.max_participants, spec.zipf_exponent)
    size_per_country = _zipf_weights(1, spec.max_participants, spec.zipf_exponent)
    profile = np.asarray(spec.profile, dtype=float)
    slot_td = timedelta(minutes=SLOT_MINUTES)
    spread_us = int(spec.join_spread_minutes * 60e6)

    calls: list[CallRecord] = []
    for day in range(spec.days):
        per_country = rng.multinomial(spec.calls_per_day, pop)
        day_calls = []
        for ci, n_calls in enumerate(per_country):
            if n_calls == 0:
                continue
            home = countries[ci]
            week_slot0 = (day * SLOTS_PER_DAY) % SLOTS_PER_WEEK
            shape = np.roll(profile, spec.country_offsets.get(home, 0))[week_slot0:week_slot0 + SLOTS_PER_DAY]
            if shape.sum() <= 0:
                shape = np.ones(SLOTS_PER_DAY)
            slot_counts = rng.multinomial(n_calls, shape / shape.sum())
            for s, k in enumerate(slot_counts):
                for _ in range(k):
                    day_calls.append((s, home))
        for s, home in day_calls:
            counts = {}
            if spec.international_prob > 0 and rng.random() < spec.international_prob:
                others = [c for c in countries if c != home]
                op = np.array([spec.countries[c] for c in others], dtype=float)
                other = others[rng.choice(len(others), p=op / op.sum())]
                counts[home] = 1 + int(rng.choice(len(size_per_country), p=size_per_country))
                counts[other] = 1 + int(rng.choice(len(size_per_country), p=size_per_country))
            else:
                counts[home] = 2 + int(rng.choice(len(size_intra), p=size_intra))
            md = media[rng.choice(len(media), p=media_p)]
            dur = durations[rng.choice(len(durations), p=dur_p)]
            people = [c for c in sorted(counts) for _ in range(counts[c])]
            rng.shuffle(people)
            # the home country hosts the first joiner
            first = people.index(home)
            people[0], people[first] = people[first], people[0]
            slot_start = spec.start + (day * SLOTS_PER_DAY + s) * slot_td
            start = slot_start + timedelta(microseconds=int(rng.integers(0, SLOT_MINUTES * 60_000_000 - spread_us)))
            offsets = sorted(int(v) for v in rng.integers(0, spread_us + 1, size=len(people) - 1))
            joins = ((start, people[0]),) + tuple(
                (start + timedelta(microseconds=o), p) for o, p in zip(offsets, people[1:])
            )
            calls.append(CallRecord("", start, joins, md, day * SLOTS_PER_DAY + s, dur))
    calls.sort(key=lambda c: (c.start, c.joins))
    width = max(6, len(str(len(calls))))
    return [
        CallRecord(f"c{i:0{width}d}", c.start, c.joins, c.media, c.slot, c.duration_slots) for i, c in enumerate(calls)
    ]


# -- usage and metrics ------------------------------------------------------------


@dataclass
class LinkUsageSeries:
    """Per-slot Mbps on each WAN link and on each DC's Internet egress."""

    first_slot: int
    n_slots: int
    wan: dict[str, np.ndarray]
    internet: dict[str, np.ndarray]
    compute: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def empty(cls, first_slot: int, n_slots: int, links: Sequence[str], dcs: Sequence[str]) -> "LinkUsageSeries":
        z = lambda: np.zeros(n_slots)  # noqa: E731
        return cls(first_slot, n_slots, {l: z() for l in links}, {d: z() for d in dcs}, {d: z() for d in dcs})

    @property
    def slots(self) -> range:
        return range(self.first_slot, self.first_slot + self.n_slots)

    def peaks(self) -> dict[str, float]:
        return {l: float(v.max()) if v.size else 0.0 for l, v in sorted(self.wan.items())}

    def sum_of_peaks(self) -> float:
        return float(sum(self.peaks().values()))

    def write_csv(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slot", "kind", "id", "value"])
            for kind, table in (("wan_mbps", self.wan), ("internet_mbps", self.internet), ("cores", self.compute)):
                for key in sorted(table):
                    for i, v in enumerate(table[key]):
                        if v:
                            w.writerow([self.first_slot + i, kind, key, repr(round(float(v), 9))])

    @classmethod
    def read_csv(cls, path: str | Path, first_slot: int, n_slots: int, links: Sequence[str], dcs: Sequence[str]):
        out = cls.empty(first_slot, n_slots, links, dcs)
        tables = {"wan_mbps": out.wan, "internet_mbps": out.internet, "cores": out.compute}
        with open(path, newline="") as fh:
            for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                tables[row["kind"]][row["id"]][int(row["slot"]) - first_slot] = float(row["value"])
        return out


@dataclass
class MetricsReport:
    label: str
    seed: int | None
    calls: int
    dropped: int
    sum_of_peaks_mbps: float
    peak_by_link_mbps: dict[str, float]
    wan_traffic_mb: float
    internet_traffic_mb: float
    total_traffic_mb: float
    e2e_daily: list[dict]
    e2e_mean_ms: float
    e2e_median_ms: float
    e2e_p95_ms: float
    inter_dc_migrations: int
    route_only_migrations: int
    inter_dc_migration_pct: float
    route_overrides: int
    compute_excess_cores: float = 0.0
    internet_excess_mbps: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def summary_row(self) -> dict:
        return {
            "policy": self.label,
            "seed": self.seed,
            "calls": self.calls,
            "dropped": self.dropped,
            "sum_of_peaks_mbps": round(self.sum_of_peaks_mbps, 6),
            "total_traffic_mb": round(self.total_traffic_mb, 6),
            "e2e_mean_ms": round(self.e2e_mean_ms, 6),
            "e2e_median_ms": round(self.e2e_median_ms, 6),
            "e2e_p95_ms": round(self.e2e_p95_ms, 6),
            "inter_dc_migration_pct": round(self.inter_dc_migration_pct, 6),
        }


def _stats(values: Sequence[float]) -> tuple[float, float, float]:
    if not len(values):
        return 0.0, 0.0, 0.0
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(np.median(a)), float(np.percentile(a, 95))


def metrics(
    decisions: Sequence[Decision],
    usage: LinkUsageSeries | None,
    label: str = "",
    seed: int | None = None,
    compute_cap: Mapping[tuple[int, str], float] | None = None,
    internet_cap_mbps: Mapping[tuple[int, str], float] | None = None,
) -> MetricsReport:
    """Report recomputed from a decision log and usage series alone.

    ``settle`` events carry ``e2e_ms=<value>;day=<index>`` in their reason.
    """
    settled = [d for d in decisions if d.event == "settle"]
    dropped = sum(1 for d in decisions if d.event == "reject")
    migr = [d for d in decisions if d.event == "migrate"]
    inter = sum(1 for d in migr if d.reason.startswith("interDc"))
    overrides = sum(1 for d in decisions if d.event == "override")
    by_day: dict[int, list[float]] = defaultdict(list)
    all_e2e = []
    for d in settled:
        kv = dict(part.split("=", 1) for part in d.reason.split(";") if "=" in part)
        v = float(kv["e2e_ms"])
        by_day[int(kv.get("day", 0))].append(v)
        all_e2e.append(v)
    daily = []
    for day in sorted(by_day):
        mean, med, p95 = _stats(by_day[day])
        daily.append({"day": day, "mean_ms": mean, "median_ms": med, "p95_ms": p95, "calls": len(by_day[day])})
    mean, med, p95 = _stats(all_e2e)

    if usage is None:
        peaks, wan_mb, inet_mb = {}, 0.0, 0.0
    else:
        peaks = usage.peaks()
        wan_mb = sum(mbps_slots_to_mb(float(v.sum())) for v in usage.wan.values())
        inet_mb = sum(mbps_slots_to_mb(float(v.sum())) for v in usage.internet.values())
    cx = ix = 0.0
    if usage is not None and compute_cap is not None:
        for dc, arr in usage.compute.items():
            for i, v in enumerate(arr):
                cx = max(cx, v - compute_cap.get((usage.first_slot + i, dc), math.inf))
    if usage is not None and internet_cap_mbps is not None:
        for dc, arr in usage.internet.items():
            for i, v in enumerate(arr):
                ix = max(ix, v - internet_cap_mbps.get((usage.first_slot + i, dc), math.inf))
    n = len(settled)
    return MetricsReport(
        label=label,
        seed=seed,
        calls=n,
        dropped=dropped,
        sum_of_peaks_mbps=float(sum(peaks.values())),
        peak_by_link_mbps=peaks,
        wan_traffic_mb=wan_mb,
        internet_traffic_mb=inet_mb,
        total_traffic_mb=wan_mb + inet_mb,
        e2e_daily=daily,
        e2e_mean_ms=mean,
        e2e_median_ms=med,
        e2e_p95_ms=p95,
        inter_dc_migrations=inter,
        route_only_migrations=len(migr) - inter,
        inter_dc_migration_pct=100.0 * inter / n if n else 0.0,
        route_overrides=overrides,
        compute_excess_cores=max(0.0, cx),
        internet_excess_mbps=max(0.0, ix),
    )


# -- the run loop -------------------------------------------------------------------


@dataclass
class SimResult:
    decisions: list[Decision]
    usage: LinkUsageSeries
    report: MetricsReport


LossTraces = Mapping[tuple[str, str, int], tuple[float, float]]


def run(
    policy: Policy,
    calls: Sequence[CallRecord],
    topology: Topology,
    resources: ResourceModel | None = None,
    *,
    mode: str = "oracle",
    dc_cores: Mapping[str, float] | None = None,
    compute_cap: Mapping[tuple[int, str], float] | None = None,
    internet_fractions: Mapping[tuple[str, str], float] | None = None,
    internet_cap_gbps: Mapping[tuple[int, str], float] | None = None,
    loss_traces: LossTraces | None = None,
    seed: int = 0,
    label: str | None = None,
) -> SimResult:
    """Drive ``policy`` over ``calls`` in start order.

    Each call is assigned once at its first join and may migrate once at
    convergence; all usage is charged to the post-convergence assignment.
    ``loss_traces`` maps (country, dc, slot) to (loss %, latency ms) seen by
    Internet participants; a breach moves that country's participants of
    the call to WAN from that slot on.
    """
    resources = resources or ResourceModel.default()
    calls = sorted(calls, key=lambda c: (c.start, c.call_id))
    dcs = topology.dc_ids
    if dc_cores is None:
        dc_cores = {d: math.inf for d in dcs}
    if calls:
        first = min(c.slot for c in calls)
        last = max(c.slot + c.duration_slots for c in calls)
    else:
        first, last = 0, 0
    n_slots = last - first
    if compute_cap is None:
        compute_cap = {(t, d): dc_cores.get(d, 0.0) for t in range(first, last) for d in dcs}
    if internet_cap_gbps is None:
        internet_cap_gbps = {(t, d): topology.internet_cap(d, t) for t in range(first, last) for d in dcs}
    inet_cap_mbps = {k: 1000.0 * v for k, v in internet_cap_gbps.items()}
    ctx = SimContext(
        topology,
        resources,
        mode=mode,
        rng=random.Random(seed),
        dc_cores=dict(dc_cores),
        internet_fractions=dict(internet_fractions or {}),
        compute_left={(t, d): compute_cap.get((t, d), 0.0) for t in range(first, last) for d in dcs},
        internet_left={(t, d): inet_cap_mbps.get((t, d), 0.0) for t in range(first, last) for d in dcs},
    )
    usage = LinkUsageSeries.empty(first, n_slots, topology.link_ids, dcs)
    log: list[Decision] = []
    route_cache: dict[tuple[str, str], tuple[str, ...]] = {}

    def wan_links(country: str, dc: str) -> tuple[str, ...]:
        key = (country, dc)
        if key not in route_cache:
            route_cache[key] = topology.route(country, dc)
        return route_cache[key]

    for call in calls:
        try:
            dc, route = policy.assign(call, ctx)
        except NoCapacityError as exc:
            log.append(Decision(call.start, call.call_id, "reject", "", "", str(exc)))
            continue
        log.append(Decision(call.start, call.call_id, "assign", dc, route.value, ""))
        target = policy.converge(call, (dc, route), ctx)
        if target is not None and target != (dc, route):
            kind = "interDc" if target[0] != dc else "routeOnly"
            when = call.start + getattr(policy, "wait", timedelta(minutes=5))
            log.append(Decision(when, call.call_id, "migrate", target[0], target[1].value, f"{kind} from {dc}/{route.value}"))
            dc, route = target

        cfg = call.config
        bw = resources.bandwidth_mbps[cfg.media]
        cores = compute_used(cfg, resources)
        overridden: set[str] = set()
        start_routes: dict[str, Route] = {}
        for s in call.active_slots:
            i = s - first
            for country, n in cfg.participants:
                r = route
                if r is Route.INTERNET and country not in overridden and loss_traces:
                    m = loss_traces.get((country, dc, s))
                    if m is not None:
                        km = topology.distance_km.get((country, dc), 0.0)
                        if runtime_route_fallback(m[0], m[1], km) is not None:
                            overridden.add(country)
                            ts = call.start + (s - call.slot) * timedelta(minutes=SLOT_MINUTES)
                            log.append(Decision(ts, call.call_id, "override", dc, Route.WAN.value, f"country={country}"))
                if country in overridden:
                    r = Route.WAN
                if s == call.slot:
                    start_routes[country] = r
                if r is Route.WAN:
                    for l in wan_links(country, dc):
                        usage.wan[l][i] += n * bw
                else:
                    usage.internet[dc][i] += n * bw
                    ctx.internet_left[(s, dc)] = ctx.internet_left.get((s, dc), 0.0) - n * bw
            usage.compute[dc][i] += cores
            ctx.compute_left[(s, dc)] = ctx.compute_left.get((s, dc), 0.0) - cores

        lats = []
        for country, n in cfg.participants:
            lats.extend([topology.lat(country, dc, start_routes[country])] * min(n, 2))
        e2e = max_e2e_from_latencies(lats)
        log.append(
            Decision(call.start, call.call_id, "settle", dc, route.value,
                     f"e2e_ms={e2e!r};day={call.slot // SLOTS_PER_DAY}")
        )

    report = metrics(log, usage, label or policy.name, seed, compute_cap, inet_cap_mbps)
    return SimResult(log, usage, report)


def write_report(path: str | Path, report: MetricsReport | Sequence[MetricsReport], manifest: Mapping | None = None) -> None:
    body: dict = {"reports": [r.to_dict() for r in report]} if isinstance(report, (list, tuple)) else report.to_dict()
    if manifest is not None:
        body["manifest"] = manifest
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
