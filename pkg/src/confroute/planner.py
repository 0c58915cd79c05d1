"""Day-ahead assignment plan: how many calls of each (reduced) config go to
each MP DC over WAN or Internet in each slot, minimising the sum over WAN
links of the per-link peak bandwidth.

Constraint families:

* ``C1`` every config's demand in a slot is fully assigned;
* ``C2`` per-slot compute cores of each DC;
* ``C3`` per-slot Internet egress capacity of each DC;
* ``C4`` demand-weighted average max end-to-end latency is at most ``E``;
* ``C5`` each link's peak variable dominates its per-slot load.

Assignments are continuous; the controller samples from them.
"""

from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, LPModel, ModelBuilder, elastic_violation, solve_model
from .model import (
    ROUTES,
    CallConfig,
    ResourceModel,
    Route,
    Topology,
    compute_used,
    link_loads,
    max_e2e_latency,
    network_used,
    total_latency,
)

WEEKDAY_E_MS = 75.0
WEEKEND_E_MS = 80.0
RESIDUAL_TOL = 1e-6
FAMILIES = ("C1", "C2", "C3", "C4", "C5")


class PlanBuildError(ValueError):
    pass


class PlanInfeasibleError(RuntimeError):
    def __init__(self, plan: "Plan"):
        super().__init__(f"plan infeasible; most violated constraint family: {plan.most_violated}")
        self.plan = plan


def default_e_bound(day_index: int) -> float:
    """75 ms on weekdays, 80 ms on weekends (day 0 is a Monday)."""
    return WEEKEND_E_MS if day_index % 7 >= 5 else WEEKDAY_E_MS


@dataclass
class PlanningProblem:
    """Inputs for one planning window.

    ``demand`` maps (slot, config) to calls, ``compute_cap`` and
    ``internet_cap_gbps`` map (slot, dc) to cores and Gbps. A ``None``
    compute cap or E bound drops that constraint family entirely.
    """

    topology: Topology
    resources: ResourceModel
    slots: tuple[int, ...]
    configs: tuple[CallConfig, ...]
    demand: Mapping[tuple[int, CallConfig], float]
    compute_cap: Mapping[tuple[int, str], float] | None = None
    internet_cap_gbps: Mapping[tuple[int, str], float] | None = None
    e_bound_ms: float | None = WEEKDAY_E_MS
    routes: tuple[Route, ...] = ROUTES
    dcs: tuple[str, ...] | None = None

    def __post_init__(self):
        self.slots = tuple(self.slots)
        self.configs = tuple(self.configs)
        self.routes = tuple(self.routes)
        if self.dcs is None:
            self.dcs = self.topology.dc_ids
        if self.internet_cap_gbps is None:
            self.internet_cap_gbps = {
                (t, m): self.topology.internet_cap(m, t) for t in self.slots for m in self.dcs
            }

    @property
    def total_calls(self) -> float:
        return float(sum(self.demand.values()))

    def n(self, slot: int, cfg: CallConfig) -> float:
        return self.demand.get((slot, cfg), 0.0)

    def check(self) -> None:
        slots, configs = set(self.slots), set(self.configs)
        if len(slots) != len(self.slots) or len(configs) != len(self.configs):
            raise PlanBuildError("duplicate slots or configs")
        for (t, c), v in self.demand.items():
            if t not in slots:
                raise PlanBuildError(f"demand references unknown slot {t}")
            if c not in configs:
                raise PlanBuildError(f"demand references unknown config {c.key()}")
            if v < 0:
                raise PlanBuildError(f"negative demand at (slot {t}, {c.key()})")
        for m in self.dcs:
            self.topology.dc(m)
        if self.compute_cap is not None:
            for t in self.slots:
                for m in self.dcs:
                    if (t, m) not in self.compute_cap:
                        raise PlanBuildError(f"compute capacity missing for (slot {t}, dc {m})")
                    if self.compute_cap[(t, m)] < 0:
                        raise PlanBuildError(f"negative compute capacity at (slot {t}, dc {m})")
        if Route.INTERNET in self.routes:
            for t in self.slots:
                for m in self.dcs:
                    if (t, m) not in self.internet_cap_gbps:
                        raise PlanBuildError(f"Internet capacity missing for (slot {t}, dc {m})")
                    if self.internet_cap_gbps[(t, m)] < 0:
                        raise PlanBuildError(f"negative Internet capacity at (slot {t}, dc {m})")

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.to_dict(),
            "resources": self.resources.to_dict(),
            "slots": list(self.slots),
            "configs": [c.key() for c in self.configs],
            "dcs": list(self.dcs),
            "routes": [r.value for r in self.routes],
            "demand": [
                {"slot": t, "config": c.key(), "calls": v}
                for (t, c), v in sorted(self.demand.items(), key=lambda kv: (kv[0][0], kv[0][1].sort_key()))
            ],
            "compute_cap": None
            if self.compute_cap is None
            else [{"slot": t, "dc": m, "cores": v} for (t, m), v in sorted(self.compute_cap.items())],
            "internet_cap_gbps": [
                {"slot": t, "dc": m, "gbps": v} for (t, m), v in sorted(self.internet_cap_gbps.items())
            ],
            "e_bound_ms": self.e_bound_ms,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PlanningProblem":
        topo = Topology.from_dict(data["topology"])
        res = ResourceModel.from_dict(data["resources"]) if "resources" in data else ResourceModel.default()
        demand = {(int(e["slot"]), CallConfig.parse(e["config"])): float(e["calls"]) for e in data["demand"]}
        configs = data.get("configs")
        configs = tuple(CallConfig.parse(k) for k in configs) if configs else tuple(sorted({c for _, c in demand}))
        slots = data.get("slots") or sorted({t for t, _ in demand})
        cc = data.get("compute_cap")
        compute = None if cc is None else {(int(e["slot"]), e["dc"]): float(e["cores"]) for e in cc}
        ic = data.get("internet_cap_gbps")
        inet = None if ic is None else {(int(e["slot"]), e["dc"]): float(e["gbps"]) for e in ic}
        return cls(
            topo,
            res,
            tuple(int(s) for s in slots),
            configs,
            demand,
            compute,
            inet,
            data.get("e_bound_ms", WEEKDAY_E_MS),
            tuple(Route.parse(r) for r in data.get("routes", ["WAN", "Internet"])),
            tuple(data["dcs"]) if data.get("dcs") else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> "PlanningProblem":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _safe(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9_.]", "_", name)
    return s if re.match(r"^[A-Za-z_]", s) else "_" + s


def build_lp(
    problem: PlanningProblem,
    objective: str = "peaks",
    prune_zero_demand: bool = False,
) -> LPModel:
    """Assemble the planning LP.

    ``objective`` is ``"peaks"`` (sum of per-link peaks, with the E bound),
    ``"total_latency"`` or ``"total_max_e2e"`` (latency-first variants, which
    never carry the E bound). With ``prune_zero_demand`` the X columns of
    (slot, config) pairs without demand are left out; C1 forces them to zero
    anyway.
    """
    if objective not in ("peaks", "total_latency", "total_max_e2e"):
        raise ValueError(f"unknown objective {objective!r}")
    problem.check()
    topo, res = problem.topology, problem.resources
    links = topo.link_ids
    b = ModelBuilder()

    # per (config, dc, route) coefficients
    coef: dict[tuple[CallConfig, str, Route], tuple[float, float, float, float, dict[str, float]]] = {}
    for c in problem.configs:
        cores = compute_used(c, res)
        bw = network_used(c, res)
        for m in problem.dcs:
            for p in problem.routes:
                e2e = max_e2e_latency(c, m, p, topo)
                if objective == "total_latency":
                    cost = total_latency(c, m, p, topo)
                elif objective == "total_max_e2e":
                    cost = e2e
                else:
                    cost = 0.0
                loads = link_loads(c, m, p, topo, res)
                coef[(c, m, p)] = (cores, bw, e2e, cost, loads)

    x_keys: list[tuple[int, CallConfig, str, Route]] = []
    cols: dict[tuple[int, CallConfig, str, Route], int] = {}
    cfg_index = {c: i for i, c in enumerate(problem.configs)}
    dc_index = {m: i for i, m in enumerate(problem.dcs)}
    for t in problem.slots:
        for c in problem.configs:
            if prune_zero_demand and problem.n(t, c) <= 0:
                continue
            for m in problem.dcs:
                for p in problem.routes:
                    key = (t, c, m, p)
                    cols[key] = b.add_var(f"X_{t}_{cfg_index[c]}_{dc_index[m]}_{p.short}", coef[(c, m, p)][3])
                    x_keys.append(key)
    y_col = {}
    for l in links:
        y_col[l] = b.add_var(f"y_{_safe(l)}", 1.0 if objective == "peaks" else 0.0)

    by_slot_cfg: dict[tuple[int, CallConfig], list] = defaultdict(list)
    for key, j in cols.items():
        by_slot_cfg[(key[0], key[1])].append((key, j))

    # C1
    for t in problem.slots:
        for c in problem.configs:
            entries = by_slot_cfg.get((t, c), [])
            if not entries:
                continue
            b.add_row(f"C1_t{t}_c{cfg_index[c]}", "C1", [j for _, j in entries], [1.0] * len(entries), "=", problem.n(t, c))
    # C2
    if problem.compute_cap is not None:
        for t in problem.slots:
            for m in problem.dcs:
                js, vs = [], []
                for c in problem.configs:
                    for p in problem.routes:
                        j = cols.get((t, c, m, p))
                        if j is not None:
                            js.append(j)
                            vs.append(coef[(c, m, p)][0])
                b.add_row(f"C2_t{t}_m{dc_index[m]}", "C2", js, vs, "<=", problem.compute_cap[(t, m)])
    # C3
    if Route.INTERNET in problem.routes:
        for t in problem.slots:
            for m in problem.dcs:
                js, vs = [], []
                for c in problem.configs:
                    j = cols.get((t, c, m, Route.INTERNET))
                    if j is not None:
                        js.append(j)
                        vs.append(coef[(c, m, Route.INTERNET)][1])
                b.add_row(f"C3_t{t}_m{dc_index[m]}", "C3", js, vs, "<=", 1000.0 * problem.internet_cap_gbps[(t, m)])
    # C4
    if objective == "peaks" and problem.e_bound_ms is not None:
        js = [cols[k] for k in x_keys]
        vs = [coef[(k[1], k[2], k[3])][2] for k in x_keys]
        b.add_row("C4", "C4", js, vs, "<=", problem.e_bound_ms * problem.total_calls)
    # C5
    link_terms: dict[tuple[int, str], list[tuple[int, float]]] = defaultdict(list)
    for key in x_keys:
        for l, load in coef[(key[1], key[2], key[3])][4].items():
            link_terms[(key[0], l)].append((cols[key], load))
    for t in problem.slots:
        for li, l in enumerate(links):
            terms = link_terms.get((t, l), [])
            b.add_row(
                f"C5_t{t}_l{li}", "C5", [j for j, _ in terms] + [y_col[l]], [v for _, v in terms] + [-1.0], "<=", 0.0
            )

    return b.build({"x_keys": x_keys, "y_keys": list(links), "objective": objective})


@dataclass
class Plan:
    """Solved assignment: X per (slot, config, dc, route) and per-link peak y."""

    status: str
    x: dict[tuple[int, CallConfig, str, Route], float]
    y: dict[str, float]
    objective: float | None
    message: str = ""
    violations: dict[str, float] = field(default_factory=dict)
    _index: dict | None = field(default=None, repr=False, compare=False)

    @property
    def most_violated(self) -> str | None:
        if not self.violations:
            return None
        fam, v = max(self.violations.items(), key=lambda kv: kv[1])
        return fam if v > 0 else None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL

    def _build_index(self):
        idx: dict[tuple[int, CallConfig], list] = defaultdict(list)
        for (t, c, m, p), v in self.x.items():
            if v > 1e-9:
                idx[(t, c)].append(((m, p), v))
        out = {}
        for key, entries in idx.items():
            entries.sort(key=lambda e: (e[0][0], e[0][1] is Route.INTERNET))
            opts = tuple(e[0] for e in entries)
            cum = list(np.cumsum([e[1] for e in entries]))
            out[key] = (opts, cum, dict(entries))
        self._index = out

    def allocation(self, slot: int, cfg: CallConfig) -> dict[tuple[str, Route], float]:
        """Positive-weight (dc, route) options for ``cfg`` in ``slot``."""
        if self._index is None:
            self._build_index()
        entry = self._index.get((slot, cfg))
        return dict(entry[2]) if entry else {}

    def sampler(self, slot: int, cfg: CallConfig):
        """(options, cumulative weights) for fast weighted draws, or None."""
        if self._index is None:
            self._build_index()
        entry = self._index.get((slot, cfg))
        return None if entry is None else (entry[0], entry[1])

    def configs(self) -> list[CallConfig]:
        return sorted({c for _, c, _, _ in self.x})

    def merged(self, other: "Plan") -> "Plan":
        status = OPTIMAL if self.is_optimal and other.is_optimal else (self.status if not self.is_optimal else other.status)
        y = dict(self.y)
        for l, v in other.y.items():
            y[l] = max(y.get(l, 0.0), v)
        obj = None if self.objective is None or other.objective is None else self.objective + other.objective
        return Plan(status, {**self.x, **other.x}, y, obj, "; ".join(filter(None, [self.message, other.message])))

    # -- IO -------------------------------------------------------------------

    def to_dict(self) -> dict:
        rows = [
            {"slot": t, "config": c.key(), "dc": m, "route": p.value, "calls": v}
            for (t, c, m, p), v in self.x.items()
            if v > 1e-9
        ]
        rows.sort(key=lambda r: (r["slot"], CallConfig.parse(r["config"]).sort_key(), r["dc"], r["route"]))
        return {
            "status": self.status,
            "objective": self.objective,
            "most_violated": self.most_violated,
            "violations": dict(sorted(self.violations.items())),
            "x": rows,
            "y_mbps": dict(sorted(self.y.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Plan":
        x = {
            (int(r["slot"]), CallConfig.parse(r["config"]), r["dc"], Route.parse(r["route"])): float(r["calls"])
            for r in data["x"]
        }
        return cls(data["status"], x, dict(data.get("y_mbps", {})), data.get("objective"),
                   violations=dict(data.get("violations", {})))

    def save(self, path: str | Path, manifest: Mapping | None = None) -> None:
        body = self.to_dict()
        if manifest is not None:
            body["manifest"] = manifest
        Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Plan":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_links_csv(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["link", "peak_mbps"])
            for l, v in sorted(self.y.items()):
                w.writerow([l, repr(float(v))])


def solve(model: LPModel, backend: str = "highs", diagnose: bool = True) -> Plan:
    """Solve a model from :func:`build_lp` into a Plan.

    On infeasibility the elastic relaxation attributes the violation to
    constraint families (see :attr:`Plan.most_violated`).
    """
    sol = solve_model(model, backend)
    if sol.status != OPTIMAL:
        # demand must be served, so only capacity, latency and peak rows may stretch
        violations = (
            elastic_violation(model, backend, hard_families=("C1",)) if (diagnose and sol.status == INFEASIBLE) else {}
        )
        return Plan(sol.status, {}, {}, None, sol.message, violations)
    xk = model.meta["x_keys"]
    x = {k: float(sol.x[j]) for j, k in enumerate(xk)}
    y = {l: float(sol.x[len(xk) + i]) for i, l in enumerate(model.meta["y_keys"])}
    return Plan(OPTIMAL, x, y, float(sol.objective), sol.message)


def peak_loads(plan: Plan, problem: PlanningProblem) -> dict[str, float]:
    """Per-link peak over the window implied by ``plan.x``."""
    per: dict[tuple[str, int], float] = defaultdict(float)
    cache = {}
    for (t, c, m, p), v in plan.x.items():
        if v <= 0:
            continue
        key = (c, m, p)
        if key not in cache:
            cache[key] = link_loads(c, m, p, problem.topology, problem.resources)
        for l, load in cache[key].items():
            per[(l, t)] += v * load
    out = {l: 0.0 for l in problem.topology.link_ids}
    for (l, _), v in per.items():
        out[l] = max(out[l], v)
    return out


def solve_problem(
    problem: PlanningProblem, backend: str = "highs", objective: str = "peaks", prune_zero_demand: bool = True
) -> Plan:
    plan = solve(build_lp(problem, objective, prune_zero_demand), backend)
    if plan.is_optimal and objective != "peaks":
        # latency objectives leave y unpinned; report the realised peaks
        plan.y = peak_loads(plan, problem)
    return plan


@dataclass(frozen=True)
class ResidualReport:
    max_residual: Mapping[str, float]
    scale: Mapping[str, float]
    negative_x: float

    @property
    def passed(self) -> bool:
        ok = all(self.max_residual[f] <= RESIDUAL_TOL * self.scale[f] for f in self.max_residual)
        return ok and self.negative_x <= RESIDUAL_TOL

    def failing(self) -> list[str]:
        return [f for f in self.max_residual if self.max_residual[f] > RESIDUAL_TOL * self.scale[f]]


def validate_plan(plan: Plan, problem: PlanningProblem) -> ResidualReport:
    """Recompute every constraint directly from the problem data."""
    topo, res = problem.topology, problem.resources
    assigned: dict[tuple[int, CallConfig], float] = defaultdict(float)
    cores: dict[tuple[int, str], float] = defaultdict(float)
    inet: dict[tuple[int, str], float] = defaultdict(float)
    load: dict[tuple[int, str], float] = defaultdict(float)
    e2e_sum = 0.0
    neg = 0.0
    for (t, c, m, p), v in plan.x.items():
        neg = max(neg, -v)
        assigned[(t, c)] += v
        cores[(t, m)] += v * compute_used(c, res)
        if p is Route.INTERNET:
            inet[(t, m)] += v * network_used(c, res)
        for l, ll in link_loads(c, m, p, topo, res).items():
            load[(t, l)] += v * ll
        e2e_sum += v * max_e2e_latency(c, m, p, topo)

    r = {f: 0.0 for f in FAMILIES}
    scale = {f: 1.0 for f in FAMILIES}
    for t in problem.slots:
        for c in problem.configs:
            n = problem.n(t, c)
            r["C1"] = max(r["C1"], abs(assigned[(t, c)] - n))
            scale["C1"] = max(scale["C1"], n)
        for m in problem.dcs:
            if problem.compute_cap is not None:
                cap = problem.compute_cap[(t, m)]
                r["C2"] = max(r["C2"], cores[(t, m)] - cap)
                scale["C2"] = max(scale["C2"], cap)
            if Route.INTERNET in problem.routes:
                cap = 1000.0 * problem.internet_cap_gbps[(t, m)]
                r["C3"] = max(r["C3"], inet[(t, m)] - cap)
                scale["C3"] = max(scale["C3"], cap)
        for l in topo.link_ids:
            r["C5"] = max(r["C5"], load[(t, l)] - plan.y.get(l, 0.0))
            scale["C5"] = max(scale["C5"], load[(t, l)])
    if problem.e_bound_ms is not None:
        bound = problem.e_bound_ms * problem.total_calls
        r["C4"] = max(0.0, e2e_sum - bound)
        scale["C4"] = max(1.0, bound)
    return ResidualReport({f: max(0.0, v) for f, v in r.items()}, scale, neg)


def plan_window(problems: Iterable[PlanningProblem], backend: str = "highs", objective: str = "peaks") -> Plan:
    """Solve consecutive planning windows (e.g. one per day) and merge them."""
    merged = None
    for prob in problems:
        p = solve_problem(prob, backend, objective)
        merged = p if merged is None else merged.merged(p)
    if merged is None:
        raise ValueError("no planning windows")
    return merged


def demand_from_calls(
    calls: Sequence, reduced: bool = True
) -> dict[tuple[int, CallConfig], float]:
    """Active-call demand per (slot, config) from call records.

    A call counts in every slot it is active. With ``reduced`` the configs are
    reduced and counts scaled by the multiplier.
    """
    from .model import reduce_config

    out: dict[tuple[int, CallConfig], float] = defaultdict(float)
    for call in calls:
        cfg = call.config
        mult = 1
        if reduced:
            cfg, mult = reduce_config(cfg)
        for s in call.active_slots:
            out[(s, cfg)] += mult
    return dict(out)
