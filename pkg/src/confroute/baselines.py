"""Reference assignment policies: weighted round robin over (dc, route)
buckets, latency-first planning, and cores-weighted random offload."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .model import ROUTES, CallConfig, CallRecord, MediaType, Route, compute_used, network_used
from .planner import Plan, PlanningProblem, solve_problem
from .policy import NoCapacityError, Policy, SimContext

LF_VARIANTS = {"totalLatency": "total_latency", "totalMaxE2E": "total_max_e2e"}


@dataclass(frozen=True)
class Bucket:
    dc: str
    route: Route
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("bucket weight must be >= 0")


def min_fraction(fractions: Mapping[tuple[str, str], float], countries: Iterable[str], dc: str) -> float:
    return min(fractions.get((c, dc), 0.0) for c in countries)


def wrr_buckets(
    dc_cores: Mapping[str, float],
    fractions: Mapping[tuple[str, str], float],
    countries: Iterable[str] | CallConfig,
) -> list[Bucket]:
    """Per dc a WAN and an Internet bucket splitting its cores by the smallest
    Internet fraction among the call's countries. Fractions are in [0, 1]."""
    if isinstance(countries, CallConfig):
        countries = countries.countries
    countries = tuple(countries)
    out = []
    for dc in sorted(dc_cores):
        f = min_fraction(fractions, countries, dc)
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"Internet fraction for {dc} must be within [0, 1], got {f}")
        cores = dc_cores[dc]
        out.append(Bucket(dc, Route.WAN, cores * (1.0 - f)))
        out.append(Bucket(dc, Route.INTERNET, cores * f))
    return out


class SmoothRoundRobin:
    """Deterministic smooth weighted round robin (each pick goes to the bucket
    with the largest running credit)."""

    def __init__(self, buckets: list[Bucket]):
        self.buckets = [b for b in buckets if b.weight > 0]
        if not self.buckets:
            raise NoCapacityError("all buckets have zero weight")
        self.total = sum(b.weight for b in self.buckets)
        self.credit = [0.0] * len(self.buckets)

    def next(self) -> Bucket:
        for i, b in enumerate(self.buckets):
            self.credit[i] += b.weight
        i = max(range(len(self.buckets)), key=lambda k: (self.credit[k], -k))
        self.credit[i] -= self.total
        return self.buckets[i]


def lf_assign(problem: PlanningProblem, variant: str = "totalLatency", backend: str = "highs") -> Plan:
    """Latency-first plan: the planning LP with a latency objective and no
    end-to-end latency bound."""
    if variant not in LF_VARIANTS:
        raise ValueError(f"variant must be one of {sorted(LF_VARIANTS)}")
    return solve_problem(replace(problem, e_bound_ms=None), backend=backend, objective=LF_VARIANTS[variant])


def random_offload_assign(
    dc_cores: Mapping[str, float],
    fractions: Mapping[tuple[str, str], float],
    rng: random.Random,
    countries: Iterable[str],
) -> tuple[str, Route]:
    """dc drawn in proportion to cores; Internet with the (min over
    ``countries``) offload fraction for that dc."""
    dcs = sorted(dc_cores)
    weights = [dc_cores[d] for d in dcs]
    if sum(weights) <= 0:
        raise NoCapacityError("no cores anywhere")
    dc = rng.choices(dcs, weights=weights)[0]
    f = min_fraction(fractions, tuple(countries), dc)
    return dc, (Route.INTERNET if rng.random() < f else Route.WAN)


def lf_first_joiner(country: str, assumed: CallConfig, slot: int, ctx: SimContext) -> tuple[str, Route]:
    """Lowest-latency (dc, route) for the first joiner that still has room
    for the assumed config."""
    topo = ctx.topology
    opts = sorted(
        ((dc, r) for dc in topo.dc_ids for r in ROUTES),
        key=lambda o: (topo.lat(country, o[0], o[1]), o[0], ROUTES.index(o[1])),
    )
    cores = compute_used(assumed, ctx.resources)
    mbps = network_used(assumed, ctx.resources)
    for dc, r in opts:
        if ctx.compute_left.get((slot, dc), 0.0) < cores:
            continue
        if r is Route.INTERNET and ctx.internet_left.get((slot, dc), 0.0) < mbps:
            continue
        return dc, r
    raise NoCapacityError(f"no bucket with room for a call from {country} in slot {slot}")


# -- policies -------------------------------------------------------------------


class WRRPolicy(Policy):
    name = "wrr"

    def __init__(self):
        self._rr: dict[tuple, SmoothRoundRobin] = {}

    def assign(self, call: CallRecord, ctx: SimContext) -> tuple[str, Route]:
        countries = tuple(sorted(set(ctx.visible_countries(call))))
        rr = self._rr.get(countries)
        if rr is None:
            rr = self._rr[countries] = SmoothRoundRobin(wrr_buckets(ctx.dc_cores, ctx.internet_fractions, countries))
        b = rr.next()
        return b.dc, b.route


class RandomOffloadPolicy(Policy):
    name = "random-offload"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def assign(self, call: CallRecord, ctx: SimContext) -> tuple[str, Route]:
        return random_offload_assign(ctx.dc_cores, ctx.internet_fractions, self.rng, ctx.visible_countries(call))


class LocalityFirstPolicy(Policy):
    """Locality-first at join time. Without an oracle the call is assumed
    to be one audio participant from the first joiner's country."""

    name = "lf"

    def assign(self, call: CallRecord, ctx: SimContext) -> tuple[str, Route]:
        country = call.first_country
        assumed = CallConfig({country: 1}, MediaType.AUDIO) if ctx.mode != "oracle" else call.config
        return lf_first_joiner(country, assumed, call.slot, ctx)
