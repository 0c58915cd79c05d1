"""Online call assignment driven by a precomputed plan.

A call is placed at its first join by assuming it is an intra-country call
of the most recently seen reduced config for the joiner's country, drawing
a (dc, route) in proportion to the plan. After a short wait the true config
is known and the call migrates only if the plan gives its current
assignment no weight at all.
"""

from __future__ import annotations

import bisect
import csv
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping

from .model import (
    ROUTES,
    CallConfig,
    CallRecord,
    MediaType,
    Route,
    Topology,
    compute_used,
    reduce_config,
)
from .policy import NoCapacityError, Policy, SimContext

DEFAULT_WAIT_MINUTES = 5.0
SEVERE_LOSS_PCT = 1.0
MIN_LATENCY_THRESHOLD_MS = 60.0
STRICTNESS = ("zero-weight", "argmax")


class UnplannedConfig(LookupError):
    """The plan has no positive allocation for a config in a slot."""


@dataclass
class LiveCall:
    call_id: str
    joiners: list[str]
    media_observed: MediaType
    dc: str
    route: Route
    assigned_at: datetime
    converged: bool = False
    overrides: dict[str, Route] = field(default_factory=dict)
    unplanned: bool = False

    def override(self, country: str) -> None:
        """Move a country's participants to WAN. Never the reverse."""
        if self.route is Route.INTERNET:
            self.overrides[country] = Route.WAN


@dataclass(frozen=True)
class MigrationEvent:
    call_id: str
    from_dc: str
    to_dc: str
    from_route: Route
    to_route: Route
    slot: int

    @property
    def kind(self) -> str:
        return "interDc" if self.from_dc != self.to_dc else "routeOnly"


class RecentRccCache:
    """Most recent intra-country config seen per country."""

    def __init__(self, reduced: bool = True):
        self.reduced = reduced
        self._by_country: dict[str, CallConfig] = {}

    def get(self, country: str) -> CallConfig:
        cfg = self._by_country.get(country)
        if cfg is None:
            return CallConfig({country: 1}, MediaType.AUDIO)
        return cfg

    def observe(self, cfg: CallConfig) -> None:
        if not cfg.is_intra_country:
            return
        if self.reduced:
            cfg = reduce_config(cfg)[0]
        self._by_country[cfg.countries[0]] = cfg

    def __len__(self) -> int:
        return len(self._by_country)


def initial_assign(country: str, plan, slot: int, cache: RecentRccCache, rng: random.Random) -> tuple[str, Route]:
    """Weighted draw from the plan's allocation for the assumed config.

    Raises:
        UnplannedConfig: when the plan allocates nothing to that config.
    """
    cfg = cache.get(country)
    entry = plan.sampler(slot, cfg)
    if entry is None:
        raise UnplannedConfig(f"no plan weight for {cfg.key()} in slot {slot}")
    options, cum = entry
    u = rng.random() * cum[-1]
    return options[min(bisect.bisect_right(cum, u), len(options) - 1)]


def plan_target(allocation: Mapping[tuple[str, Route], float]) -> tuple[str, Route]:
    """Highest-weight option; ties go to the lowest dc id, then WAN."""
    return min(allocation, key=lambda o: (-allocation[o], o[0], ROUTES.index(o[1])))


def converge_and_migrate(
    call: LiveCall,
    plan,
    slot: int,
    true_config: CallConfig,
    reduced: bool = True,
    strictness: str = "zero-weight",
) -> MigrationEvent | None:
    """Re-check a call once its config is known; mutates ``call``.

    With ``"zero-weight"`` the call moves only if its current option has no
    plan weight; with ``"argmax"`` it moves whenever it is not on the
    plan's top option.
    """
    if strictness not in STRICTNESS:
        raise ValueError(f"strictness must be one of {STRICTNESS}")
    cfg = reduce_config(true_config)[0] if reduced else true_config
    call.converged = True
    alloc = plan.allocation(slot, cfg)
    if not alloc:
        call.unplanned = True
        return None
    current = (call.dc, call.route)
    if strictness == "zero-weight" and alloc.get(current, 0.0) > 0:
        return None
    target = plan_target(alloc)
    if target == current:
        return None
    ev = MigrationEvent(call.call_id, call.dc, target[0], call.route, target[1], slot)
    call.dc, call.route = target
    return ev


def handle_surge(
    country: str,
    topology: Topology,
    capacity_left: Mapping[str, float],
    needed_cores: float,
) -> str:
    """Nearest dc (by WAN latency) that still has ``needed_cores`` free.

    Raises:
        NoCapacityError: every dc is full.
    """
    order = sorted(topology.dc_ids, key=lambda d: (topology.lat(country, d, Route.WAN), d))
    for dc in order:
        if capacity_left.get(dc, 0.0) >= needed_cores:
            return dc
    raise NoCapacityError(f"no dc has {needed_cores:g} free cores for a call from {country}")


def latency_threshold_ms(distance_km: float) -> float:
    # light in fibre covers roughly 100 km per ms
    return max(MIN_LATENCY_THRESHOLD_MS, 1.5 * distance_km / 100.0)


def runtime_route_fallback(
    loss_pct: float,
    latency_ms: float,
    distance_km: float,
    current: Route = Route.INTERNET,
) -> Route | None:
    """WAN if an Internet participant sees heavy loss or excess latency."""
    if current is not Route.INTERNET:
        return None
    if loss_pct >= SEVERE_LOSS_PCT or latency_ms > latency_threshold_ms(distance_km):
        return Route.WAN
    return None


class PlanController(Policy):
    """Plan-driven policy for first-joiner and reveal modes.

    ``reduced`` selects whether the plan is keyed by reduced or raw configs.
    In reveal mode the true config is used at join, so nothing migrates.
    """

    def __init__(
        self,
        plan,
        reduced: bool = True,
        wait_minutes: float = DEFAULT_WAIT_MINUTES,
        strictness: str = "zero-weight",
        seed: int = 0,
        name: str = "planned",
    ):
        self.plan = plan
        self.reduced = reduced
        self.wait = timedelta(minutes=wait_minutes)
        self.strictness = strictness
        self.rng = random.Random(seed)
        self.cache = RecentRccCache(reduced)
        self.name = name
        self.live: dict[str, LiveCall] = {}
        self.migrations: list[MigrationEvent] = []
        self.surges = 0

    def _key(self, cfg: CallConfig) -> CallConfig:
        return reduce_config(cfg)[0] if self.reduced else cfg

    def assign(self, call: CallRecord, ctx: SimContext) -> tuple[str, Route]:
        country = call.first_country
        try:
            if ctx.mode == "reveal":
                entry = self.plan.sampler(call.slot, self._key(call.config))
                if entry is None:
                    raise UnplannedConfig(call.config.key())
                options, cum = entry
                u = self.rng.random() * cum[-1]
                choice = options[min(bisect.bisect_right(cum, u), len(options) - 1)]
            else:
                choice = initial_assign(country, self.plan, call.slot, self.cache, self.rng)
        except UnplannedConfig:
            self.surges += 1
            assumed = call.config if ctx.mode == "reveal" else self.cache.get(country)
            left = {dc: ctx.compute_left.get((call.slot, dc), 0.0) for dc in ctx.topology.dc_ids}
            choice = (handle_surge(country, ctx.topology, left, compute_used(assumed, ctx.resources)), Route.WAN)
        self.live[call.call_id] = LiveCall(
            call.call_id, [country], MediaType.AUDIO, choice[0], choice[1], call.start
        )
        return choice

    def converge(self, call: CallRecord, current: tuple[str, Route], ctx: SimContext) -> tuple[str, Route] | None:
        live = self.live.pop(call.call_id)
        until = live.assigned_at + self.wait
        true_cfg = call.config_at(until, call.media)
        live.joiners = [c for t, c in call.joins if t <= until]
        live.media_observed = call.media
        self.cache.observe(true_cfg)
        if ctx.mode == "reveal":
            return None
        ev = converge_and_migrate(live, self.plan, call.slot, true_cfg, self.reduced, self.strictness)
        if ev is None:
            return None
        self.migrations.append(ev)
        return ev.to_dc, ev.to_route


# -- decision log ----------------------------------------------------------------

DECISION_COLUMNS = ("time", "call_id", "event", "dc", "route", "reason")


@dataclass(frozen=True)
class Decision:
    time: datetime
    call_id: str
    event: str
    dc: str
    route: str
    reason: str = ""


def write_decisions(path: str | Path, decisions: Iterable[Decision], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECISION_COLUMNS)
        for d in decisions:
            w.writerow([d.time.strftime("%Y-%m-%dT%H:%M:%S.%fZ"), d.call_id, d.event, d.dc, d.route, d.reason])


def read_decisions(path: str | Path) -> list[Decision]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            ts = datetime.fromisoformat(row["time"].replace("Z", "+00:00"))
            out.append(Decision(ts, row["call_id"], row["event"], row["dc"], row["route"], row["reason"]))
    return out
