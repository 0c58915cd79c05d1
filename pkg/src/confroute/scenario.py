"""A synthetic European deployment and the glue that turns a trace into
planning problems and runnable policies.

Geography is coarse: one representative city per country, WAN links
between neighbouring countries, latencies derived from distance. None of
the numbers are measurements.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx

from .baselines import LocalityFirstPolicy, RandomOffloadPolicy, WRRPolicy, lf_assign
from .controller import PlanController
from .model import (
    SLOTS_PER_DAY,
    CallRecord,
    DataCenter,
    ResourceModel,
    Route,
    Topology,
    WanLink,
    compute_used,
)
from .planner import Plan, PlanningProblem, PlanInfeasibleError, default_e_bound, demand_from_calls, solve_problem
from .policy import PlanOraclePolicy, Policy
from .ramp import allocate_capacity, fractions_to_internet_cap, participants_by_country
from .simulator import SimResult, SyntheticWorkloadSpec, run

# (lat, lon) of a representative city
SITES = {
    "DE": (50.11, 8.68),
    "ES": (40.42, -3.70),
    "FR": (48.86, 2.35),
    "GB": (51.51, -0.13),
    "IE": (53.35, -6.26),
    "IT": (45.46, 9.19),
    "NL": (52.37, 4.90),
    "PL": (52.23, 21.01),
    "SE": (59.33, 18.07),
}
NEIGHBOURS = (
    ("GB", "IE"), ("GB", "FR"), ("GB", "NL"), ("NL", "DE"), ("NL", "FR"), ("FR", "DE"),
    ("FR", "ES"), ("FR", "IT"), ("DE", "IT"), ("DE", "PL"), ("DE", "SE"), ("NL", "SE"),
)
DCS = (("dc-fr", "FR"), ("dc-ie", "IE"), ("dc-nl", "NL"))
DC_CORE_SHARE = {"dc-fr": 0.3, "dc-ie": 0.3, "dc-nl": 0.4}
POPULARITY = {"DE": 0.2, "ES": 0.1, "FR": 0.15, "GB": 0.2, "IE": 0.04, "IT": 0.1, "NL": 0.08, "PL": 0.08, "SE": 0.05}
# UTC offset of the local working day, in slots
TZ_OFFSETS = {c: (0 if c in ("GB", "IE") else -2) for c in SITES}
# Internet offload fractions in [0, 1]; Germany is kept on WAN
OFFLOAD = {"DE": 0.0, "ES": 0.15, "FR": 0.2, "GB": 0.2, "IE": 0.2, "IT": 0.15, "NL": 0.2, "PL": 0.1, "SE": 0.15}

ACCESS_MS = 8.0
WAN_MS_PER_100KM = 1.2
INTERNET_MS_PER_100KM = 1.5


def great_circle_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (*a, *b))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def europe_topology(seed: int = 0) -> Topology:
    """WAN routes are shortest paths over the neighbour graph; the Internet
    path follows the great circle plus a seeded per-pair detour."""
    g = nx.Graph()
    links = []
    for a, b in NEIGHBOURS:
        a, b = sorted((a, b))
        lid = f"{a}-{b}"
        g.add_edge(a, b, km=great_circle_km(SITES[a], SITES[b]), id=lid)
        links.append(WanLink(lid, (a, b)))
    rng = random.Random(seed)
    routes, latency, dist = {}, {}, {}
    for country in sorted(SITES):
        for dc, home in DCS:
            path = nx.shortest_path(g, country, home, weight="km")
            hops = list(zip(path, path[1:]))
            routes[(country, dc)] = tuple(g.edges[u, v]["id"] for u, v in hops)
            path_km = sum(g.edges[u, v]["km"] for u, v in hops)
            km = great_circle_km(SITES[country], SITES[home])
            dist[(country, dc)] = km
            latency[(country, dc, Route.WAN)] = round(ACCESS_MS + WAN_MS_PER_100KM * path_km / 100, 3)
            detour = rng.uniform(-2.0, 6.0)
            latency[(country, dc, Route.INTERNET)] = round(
                max(ACCESS_MS, ACCESS_MS + INTERNET_MS_PER_100KM * km / 100 + detour), 3
            )
    return Topology(
        tuple(sorted(SITES)),
        tuple(DataCenter(d, c) for d, c in DCS),
        tuple(sorted(links, key=lambda l: l.id)),
        routes,
        latency,
        {},
        dist,
    )


def europe_workload(seed: int, calls_per_day: int = 10_000, days: int = 1, **overrides) -> SyntheticWorkloadSpec:
    return SyntheticWorkloadSpec(
        seed=seed,
        countries=dict(POPULARITY),
        calls_per_day=calls_per_day,
        days=days,
        country_offsets=dict(TZ_OFFSETS),
        **overrides,
    )


@dataclass
class Experiment:
    """Everything a policy run needs besides the policy itself."""

    topology: Topology
    resources: ResourceModel
    calls: list[CallRecord]
    dc_cores: dict[str, float]
    fractions: dict[tuple[str, str], float]
    internet_cap_gbps: dict[tuple[int, str], float]
    e_bounds: dict[int, float] = field(default_factory=dict)

    @property
    def slots(self) -> tuple[int, ...]:
        if not self.calls:
            return ()
        first = min(c.slot for c in self.calls)
        last = max(c.slot + c.duration_slots for c in self.calls)
        return tuple(range(first, last))

    @property
    def compute_cap(self) -> dict[tuple[int, str], float]:
        return {(t, d): self.dc_cores[d] for t in self.slots for d in self.dc_cores}

    def days(self) -> list[int]:
        return sorted({t // SLOTS_PER_DAY for t in self.slots})

    def problems(self, reduced: bool = True) -> list[PlanningProblem]:
        """One planning problem per day of the trace."""
        demand = demand_from_calls(self.calls, reduced=reduced)
        out = []
        for day in self.days():
            slots = tuple(t for t in self.slots if t // SLOTS_PER_DAY == day)
            d = {k: v for k, v in demand.items() if k[0] // SLOTS_PER_DAY == day}
            configs = tuple(sorted({c for _, c in d}))
            out.append(
                PlanningProblem(
                    self.topology,
                    self.resources,
                    slots,
                    configs,
                    d,
                    compute_cap={(t, m): self.dc_cores[m] for t in slots for m in self.dc_cores},
                    internet_cap_gbps={(t, m): self.internet_cap_gbps.get((t, m), 0.0) for t in slots for m in self.dc_cores},
                    e_bound_ms=self.e_bounds.get(day, default_e_bound(day)),
                )
            )
        return out


def build_experiment(
    calls: Sequence[CallRecord],
    topology: Topology | None = None,
    resources: ResourceModel | None = None,
    headroom: float = 1.3,
    fractions: Mapping[tuple[str, str], float] | None = None,
    min_peering_gbps: float = 100.0,
) -> Experiment:
    """Provision cores at ``headroom`` times the busiest slot's total demand,
    split by fixed dc shares, and derive Internet capacity from the offload
    fractions and the trace's per-country demand."""
    topology = topology or europe_topology()
    resources = resources or ResourceModel.default()
    calls = list(calls)
    per_slot: dict[int, float] = {}
    for c in calls:
        cores = compute_used(c.config, resources)
        for s in c.active_slots:
            per_slot[s] = per_slot.get(s, 0.0) + cores
    peak = max(per_slot.values(), default=0.0)
    dcs = topology.dc_ids
    shares = {d: DC_CORE_SHARE.get(d, 1.0 / len(dcs)) for d in dcs}
    total_share = sum(shares.values())
    dc_cores = {d: headroom * peak * shares[d] / total_share for d in dcs}
    if fractions is None:
        fractions = {(c, d): OFFLOAD.get(c, 0.0) for c in topology.countries for d in dcs}
    fractions = dict(fractions)

    demand = demand_from_calls(calls, reduced=False)
    participants = participants_by_country(demand)
    budgets = allocate_capacity({d: min_peering_gbps for d in dcs}, {k: 1.0 for k in fractions})
    dc_share = {(c, d): shares[d] / total_share for c in topology.countries for d in dcs}
    caps = fractions_to_internet_cap(
        {k: 100.0 * v for k, v in fractions.items()}, participants, resources, budgets, dc_share
    )
    internet_cap = {(s, d): v for (d, s), v in caps.items()}
    return Experiment(topology.with_internet_cap(caps), resources, calls, dc_cores, fractions, internet_cap)


POLICIES = ("planned", "planned-raw", "lf", "lf-e2e", "wrr", "random-offload")


def solve_days(problems: Sequence[PlanningProblem], objective: str = "peaks", backend: str = "highs") -> Plan:
    plan = None
    for prob in problems:
        if objective == "peaks":
            p = solve_problem(prob, backend)
        else:
            p = lf_assign(prob, "totalLatency" if objective == "total_latency" else "totalMaxE2E", backend)
        if not p.is_optimal:
            raise PlanInfeasibleError(p)
        plan = p if plan is None else plan.merged(p)
    if plan is None:
        return Plan("Optimal", {}, {}, 0.0)
    return plan


def make_policy(name: str, exp: Experiment, mode: str, seed: int = 0, backend: str = "highs") -> Policy:
    """Instantiate a policy by name, solving any plan it needs."""
    if name in ("planned", "planned-raw"):
        reduced = name == "planned"
        plan = solve_days(exp.problems(reduced), "peaks", backend)
        if mode == "oracle":
            return PlanOraclePolicy(plan, reduced, name)
        return PlanController(plan, reduced, seed=seed, name=name)
    if name in ("lf", "lf-e2e"):
        if mode == "oracle":
            objective = "total_latency" if name == "lf" else "total_max_e2e"
            return PlanOraclePolicy(solve_days(exp.problems(True), objective, backend), True, name)
        if name == "lf-e2e":
            raise ValueError("lf-e2e needs an oracle; use lf in first-joiner mode")
        return LocalityFirstPolicy()
    if name == "wrr":
        return WRRPolicy()
    if name == "random-offload":
        return RandomOffloadPolicy(seed)
    raise ValueError(f"unknown policy {name!r}; choose from {POLICIES}")


def run_policy(name: str, exp: Experiment, mode: str = "oracle", seed: int = 0, loss_traces=None,
               backend: str = "highs") -> SimResult:
    policy = make_policy(name, exp, mode, seed, backend)
    return run(
        policy,
        exp.calls,
        exp.topology,
        exp.resources,
        mode=mode,
        dc_cores=exp.dc_cores,
        internet_fractions=exp.fractions,
        internet_cap_gbps=exp.internet_cap_gbps,
        loss_traces=loss_traces,
        seed=seed,
        label=name,
    )
