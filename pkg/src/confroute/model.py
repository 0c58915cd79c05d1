"""Domain types shared by every module: calls, configs, topology, resources.

Also houses the config-reduction and end-to-end latency computations, which
the planner, controller and simulator all lean on.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import reduce
from pathlib import Path
from typing import Iterable, Mapping, Sequence

SLOT_MINUTES = 30
SLOTS_PER_DAY = 48
SLOTS_PER_WEEK = 336


class LatencyLookupError(KeyError):
    """Raised when a (country, dc, route) latency entry is missing."""

    def __init__(self, country: str, dc: str, route: "Route"):
        super().__init__(f"no latency for country={country!r} dc={dc!r} route={route.value}")
        self.country = country
        self.dc = dc
        self.route = route


class RouteLookupError(KeyError):
    """Raised when a WAN route for (country, dc) is missing."""

    def __init__(self, country: str, dc: str):
        super().__init__(f"no WAN route for country={country!r} dc={dc!r}")
        self.country = country
        self.dc = dc


class MediaType(enum.IntEnum):
    """Media types ordered by resource hungriness."""

    AUDIO = 0
    SCREEN_SHARE = 1
    VIDEO = 2

    @property
    def label(self) -> str:
        return _MEDIA_LABELS[self]

    @classmethod
    def parse(cls, text: str | "MediaType") -> "MediaType":
        if isinstance(text, MediaType):
            return text
        key = text.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        try:
            return _MEDIA_BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown media type {text!r}") from None


_MEDIA_LABELS = {
    MediaType.AUDIO: "Audio",
    MediaType.SCREEN_SHARE: "ScreenShare",
    MediaType.VIDEO: "Video",
}
_MEDIA_BY_KEY = {
    "audio": MediaType.AUDIO,
    "screenshare": MediaType.SCREEN_SHARE,
    "video": MediaType.VIDEO,
}


class Route(str, enum.Enum):
    WAN = "WAN"
    INTERNET = "Internet"

    @classmethod
    def parse(cls, text: str | "Route") -> "Route":
        if isinstance(text, Route):
            return text
        low = text.strip().lower()
        if low == "wan":
            return cls.WAN
        if low in ("internet", "inet"):
            return cls.INTERNET
        raise ValueError(f"unknown routing option {text!r}")

    @property
    def short(self) -> str:
        return "W" if self is Route.WAN else "I"


ROUTES = (Route.WAN, Route.INTERNET)


class CallConfig:
    """Multiset of (country, participant count) plus the call's media type.

    Participants are kept sorted by country code so equal configs compare and
    hash equal no matter how they were built.
    """

    __slots__ = ("participants", "media", "_hash")

    def __init__(self, participants: Iterable[tuple[str, int]] | Mapping[str, int], media: MediaType | str):
        items = participants.items() if isinstance(participants, Mapping) else participants
        merged: dict[str, int] = {}
        for country, count in items:
            if not isinstance(country, str) or not country:
                raise ValueError("country code must be a non-empty string")
            if country in merged:
                raise ValueError(f"duplicate country {country!r} in call config")
            count = int(count)
            if count < 1:
                raise ValueError(f"participant count for {country!r} must be >= 1, got {count}")
            merged[country] = count
        if not merged:
            raise ValueError("call config needs at least one participant")
        object.__setattr__(self, "participants", tuple(sorted(merged.items())))
        object.__setattr__(self, "media", MediaType.parse(media))
        object.__setattr__(self, "_hash", hash((self.participants, self.media)))
        self._check()

    def _check(self) -> None:
        pass

    def __setattr__(self, name, value):
        raise AttributeError("call configs are immutable")

    def __reduce__(self):
        return (type(self), (self.participants, self.media))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CallConfig):
            return NotImplemented
        return self.participants == other.participants and self.media == other.media

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "CallConfig") -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self) -> tuple:
        return (self.participants, int(self.media))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.key()!r})"

    @property
    def countries(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.participants)

    @property
    def size(self) -> int:
        return sum(n for _, n in self.participants)

    @property
    def is_intra_country(self) -> bool:
        return len(self.participants) == 1

    def count(self, country: str) -> int:
        for c, n in self.participants:
            if c == country:
                return n
        return 0

    def key(self) -> str:
        """Canonical string form, e.g. ``"FR-2+UK-1|Audio"``."""
        body = "+".join(f"{c}-{n}" for c, n in self.participants)
        return f"{body}|{self.media.label}"

    @classmethod
    def parse(cls, text: str) -> "CallConfig":
        try:
            body, media = text.rsplit("|", 1)
            parts = []
            for token in body.split("+"):
                country, count = token.rsplit("-", 1)
                parts.append((country, int(count)))
        except ValueError:
            raise ValueError(f"malformed call config {text!r}") from None
        return cls(parts, media)


class ReducedCallConfig(CallConfig):
    """A call config whose participant counts have a GCD of 1."""

    __slots__ = ()

    def _check(self) -> None:
        g = reduce(math.gcd, (n for _, n in self.participants))
        if g != 1:
            raise ValueError(f"reduced config {self.key()} has gcd {g}")


def reduce_config(cc: CallConfig) -> tuple[ReducedCallConfig, int]:
    """Divide participant counts by their GCD.

    Returns the reduced config and the multiplier (the GCD), so that
    ``multiplier * rcc.size == cc.size``.
    """
    g = reduce(math.gcd, (n for _, n in cc.participants))
    rcc = ReducedCallConfig([(c, n // g) for c, n in cc.participants], cc.media)
    return rcc, g


def group_configs(demands: Iterable[tuple[CallConfig, float]]) -> dict[ReducedCallConfig, float]:
    """Group demands by reduced config, scaling each count by its multiplier.

    Media types are never merged. Output is ordered canonically.
    """
    grouped: dict[ReducedCallConfig, float] = defaultdict(float)
    for cc, count in demands:
        if count < 0:
            raise ValueError(f"negative demand {count} for {cc.key()}")
        rcc, mult = reduce_config(cc)
        grouped[rcc] += count * mult
    return {k: grouped[k] for k in sorted(grouped)}


@dataclass(frozen=True)
class DataCenter:
    id: str
    country: str


@dataclass(frozen=True)
class WanLink:
    id: str
    endpoints: tuple[str, str]
    capacity_gbps: float | None = None


@dataclass(frozen=True)
class Topology:
    """MP data centers, WAN links/routes, per-path latencies, Internet capacity.

    ``latency`` is keyed by (country, dc id, Route) and holds the one-leg
    client<->MP latency in ms. ``internet_cap_gbps`` is keyed by (dc id, slot).
    Internet routing never touches WAN links, so only WAN routes are stored.
    """

    countries: tuple[str, ...]
    dcs: tuple[DataCenter, ...]
    links: tuple[WanLink, ...]
    routes: Mapping[tuple[str, str], tuple[str, ...]]
    latency: Mapping[tuple[str, str, Route], float]
    internet_cap_gbps: Mapping[tuple[str, int], float] = field(default_factory=dict)
    distance_km: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def dc_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.dcs)

    @property
    def link_ids(self) -> tuple[str, ...]:
        return tuple(l.id for l in self.links)

    def dc(self, dc_id: str) -> DataCenter:
        for d in self.dcs:
            if d.id == dc_id:
                return d
        raise KeyError(f"unknown dc {dc_id!r}")

    def validate(self) -> None:
        if len(set(self.countries)) != len(self.countries) or any(not c for c in self.countries):
            raise ValueError("countries must be unique non-empty codes")
        if len(set(self.dc_ids)) != len(self.dc_ids):
            raise ValueError("duplicate dc ids")
        link_ids = set(self.link_ids)
        if len(link_ids) != len(self.links):
            raise ValueError("duplicate WAN link ids")
        for (country, dc), route in self.routes.items():
            missing = [l for l in route if l not in link_ids]
            if missing:
                raise ValueError(f"route {country}->{dc} references unknown links {missing}")
        for country in self.countries:
            for dc in self.dc_ids:
                for r in ROUTES:
                    if (country, dc, r) not in self.latency:
                        raise ValueError(f"latency missing for ({country}, {dc}, {r.value})")

    def lat(self, country: str, dc: str, route: Route) -> float:
        try:
            return self.latency[(country, dc, route)]
        except KeyError:
            raise LatencyLookupError(country, dc, route) from None

    def route(self, country: str, dc: str) -> tuple[str, ...]:
        try:
            return self.routes[(country, dc)]
        except KeyError:
            raise RouteLookupError(country, dc) from None

    def internet_cap(self, dc: str, slot: int) -> float:
        return self.internet_cap_gbps.get((dc, slot), 0.0)

    def with_internet_cap(self, caps: Mapping[tuple[str, int], float]) -> "Topology":
        return Topology(
            self.countries, self.dcs, self.links, self.routes, self.latency, dict(caps), self.distance_km
        )

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "countries": list(self.countries),
            "dcs": [{"id": d.id, "country": d.country} for d in self.dcs],
            "wan_links": [
                {"id": l.id, "endpoints": list(l.endpoints), "capacity_gbps": l.capacity_gbps} for l in self.links
            ],
            "wan_routes": [
                {"country": c, "dc": d, "links": list(r)} for (c, d), r in sorted(self.routes.items())
            ],
            "latency_ms": [
                {"country": c, "dc": d, "route": r.value, "ms": v}
                for (c, d, r), v in sorted(self.latency.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].value))
            ],
            "internet_cap_gbps": [
                {"dc": d, "slot": s, "gbps": v} for (d, s), v in sorted(self.internet_cap_gbps.items())
            ],
            "distance_km": [{"country": c, "dc": d, "km": v} for (c, d), v in sorted(self.distance_km.items())],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Topology":
        dcs = tuple(DataCenter(d["id"], d["country"]) for d in data["dcs"])
        links = tuple(
            WanLink(l["id"], tuple(l.get("endpoints", ("", ""))), l.get("capacity_gbps")) for l in data.get("wan_links", [])
        )
        routes = {(r["country"], r["dc"]): tuple(r["links"]) for r in data.get("wan_routes", [])}
        latency = {(e["country"], e["dc"], Route.parse(e["route"])): float(e["ms"]) for e in data["latency_ms"]}
        caps = {(e["dc"], int(e["slot"])): float(e["gbps"]) for e in data.get("internet_cap_gbps", [])}
        dist = {(e["country"], e["dc"]): float(e["km"]) for e in data.get("distance_km", [])}
        countries = data.get("countries")
        if countries is None:
            countries = sorted({c for c, _, _ in latency})
        return cls(tuple(countries), dcs, links, routes, latency, caps, dist)


@dataclass(frozen=True)
class ResourceModel:
    """Per-participant bandwidth (Mbps) and MP cores by media type."""

    bandwidth_mbps: Mapping[MediaType, float]
    cores: Mapping[MediaType, float]

    def __post_init__(self):
        for name, table in (("bandwidth_mbps", self.bandwidth_mbps), ("cores", self.cores)):
            values = []
            for m in MediaType:
                if m not in table:
                    raise ValueError(f"{name} missing {m.label}")
                if not table[m] > 0:
                    raise ValueError(f"{name}[{m.label}] must be > 0")
                values.append(table[m])
            if any(b < a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be non-decreasing Audio <= ScreenShare <= Video")

    @classmethod
    def default(cls) -> "ResourceModel":
        return cls(
            {MediaType.AUDIO: 0.1, MediaType.SCREEN_SHARE: 1.5, MediaType.VIDEO: 2.5},
            {MediaType.AUDIO: 0.1, MediaType.SCREEN_SHARE: 0.3, MediaType.VIDEO: 0.5},
        )

    def to_dict(self) -> dict:
        return {
            "bandwidth_mbps": {m.label: self.bandwidth_mbps[m] for m in MediaType},
            "cores": {m.label: self.cores[m] for m in MediaType},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ResourceModel":
        return cls(
            {MediaType.parse(k): float(v) for k, v in data["bandwidth_mbps"].items()},
            {MediaType.parse(k): float(v) for k, v in data["cores"].items()},
        )


def load_topology(path: str | Path) -> tuple[Topology, ResourceModel]:
    """Load a topology JSON file; the optional ``resources`` key overrides defaults."""
    data = json.loads(Path(path).read_text())
    res = ResourceModel.from_dict(data["resources"]) if "resources" in data else ResourceModel.default()
    return Topology.from_dict(data), res


def save_topology(path: str | Path, topo: Topology, resources: ResourceModel | None = None) -> None:
    data = topo.to_dict()
    if resources is not None:
        data["resources"] = resources.to_dict()
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- per-config resource and latency functions ---------------------------------


def compute_used(c: CallConfig, res: ResourceModel) -> float:
    return c.size * res.cores[c.media]


def network_used(c: CallConfig, res: ResourceModel) -> float:
    """Mbps carried by a call of config ``c``; identical for every (dc, route)."""
    return c.size * res.bandwidth_mbps[c.media]


def link_loads(c: CallConfig, dc: str, route: Route, topo: Topology, res: ResourceModel) -> dict[str, float]:
    """Mbps that one call of ``c`` puts on each WAN link. Empty for Internet."""
    if route is Route.INTERNET:
        return {}
    bw = res.bandwidth_mbps[c.media]
    loads: dict[str, float] = defaultdict(float)
    for country, n in c.participants:
        for link in topo.route(country, dc):
            loads[link] += n * bw
    return dict(loads)


def link_load(c: CallConfig, dc: str, route: Route, link: str, topo: Topology, res: ResourceModel) -> float:
    return link_loads(c, dc, route, topo, res).get(link, 0.0)


def max_e2e_from_latencies(latencies: Sequence[float]) -> float:
    """Largest pairwise sum over distinct participant slots.

    A single slot stands for a same-country pair collapsed by reduction, so it
    counts twice.
    """
    if not latencies:
        raise ValueError("no participant latencies")
    if len(latencies) == 1:
        return 2.0 * latencies[0]
    first = second = -math.inf
    for v in latencies:
        if v > first:
            first, second = v, first
        elif v > second:
            second = v
    return first + second


def max_e2e_latency(c: CallConfig, dc: str, route: Route, topo: Topology) -> float:
    lats: list[float] = []
    for country, n in c.participants:
        v = topo.lat(country, dc, route)
        lats.extend([v] * min(n, 2))
    return max_e2e_from_latencies(lats)


def total_latency(c: CallConfig, dc: str, route: Route, topo: Topology) -> float:
    """Sum of client<->MP latency over all participants."""
    return sum(n * topo.lat(country, dc, route) for country, n in c.participants)


# -- call records --------------------------------------------------------------


@dataclass(frozen=True)
class CallRecord:
    call_id: str
    start: datetime
    joins: tuple[tuple[datetime, str], ...]
    media: MediaType
    slot: int
    duration_slots: int = 1

    def __post_init__(self):
        if not self.joins:
            raise ValueError(f"call {self.call_id} has no join events")
        times = [t for t, _ in self.joins]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError(f"call {self.call_id} join events out of order")
        if self.duration_slots < 1:
            raise ValueError("duration_slots must be >= 1")

    @property
    def first_country(self) -> str:
        return self.joins[0][1]

    @property
    def config(self) -> CallConfig:
        counts: dict[str, int] = defaultdict(int)
        for _, country in self.joins:
            counts[country] += 1
        return CallConfig(counts, self.media)

    def config_at(self, until: datetime, media: MediaType) -> CallConfig:
        counts: dict[str, int] = defaultdict(int)
        for t, country in self.joins:
            if t <= until:
                counts[country] += 1
        return CallConfig(counts, media)

    @property
    def active_slots(self) -> range:
        return range(self.slot, self.slot + self.duration_slots)


def slot_of(ts: datetime, origin: datetime) -> int:
    return int((ts - origin) // timedelta(minutes=SLOT_MINUTES))


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _parse_ts(text: str) -> datetime:
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


TRACE_COLUMNS = ("call_id", "time", "country", "media", "duration_slots")


def write_trace(path: str | Path, calls: Iterable[CallRecord], header_comment: str | None = None) -> None:
    """One row per join event."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for call in calls:
            for ts, country in call.joins:
                w.writerow([call.call_id, _iso(ts), country, call.media.label, call.duration_slots])


def read_trace(path: str | Path, origin: datetime | None = None) -> list[CallRecord]:
    """Read a join-event CSV back into call records.

    Slots are counted from ``origin`` (default: UTC midnight of the earliest
    join). The ``duration_slots`` column is optional and defaults to 1.
    """
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(lines):
            ts = _parse_ts(row["time"])
            entry = rows.setdefault(row["call_id"], [[], MediaType.AUDIO, 1])
            entry[0].append((ts, row["country"]))
            entry[1] = max(entry[1], MediaType.parse(row["media"]))
            if row.get("duration_slots"):
                entry[2] = int(row["duration_slots"])
    if not rows:
        return []
    if origin is None:
        first = min(min(t for t, _ in e[0]) for e in rows.values())
        origin = first.replace(hour=0, minute=0, second=0, microsecond=0)
    calls = []
    for call_id, (joins, media, dur) in rows.items():
        joins.sort(key=lambda j: j[0])
        start = joins[0][0]
        calls.append(CallRecord(call_id, start, tuple(joins), media, slot_of(start, origin), dur))
    calls.sort(key=lambda c: (c.start, c.call_id))
    return calls
