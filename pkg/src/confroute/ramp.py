"""Health-gated ramp of Internet offload per (client country, MP DC) pair.

Fractions are percentages of the pair's traffic. Each step consumes one
metric sample and yields exactly one action; the rule order is emergency
brake, moderate-degradation decrement, transit failover, hold, increment.
"""

from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .model import CallConfig, MediaType, ResourceModel

SEVERE_LOSS_PCT = 1.0
HEALTHY_LOSS_FLOOR_PCT = 0.1
MAX_LATENCY_INFLATION_PCT = 10.0
DEFAULT_HOLD_SLOTS = 96


class RampAction(str, enum.Enum):
    INCREMENT = "Increment"
    HOLD = "Hold"
    DECREMENT = "Decrement"
    EMERGENCY_BRAKE = "EmergencyBrakeToWAN"
    PER_USER_FALLBACK = "PerUserFallback"
    TRANSIT_FAILOVER = "TransitFailover"


@dataclass(frozen=True)
class MetricSample:
    slot: int
    p50_loss_pct: float = 0.0
    latency_inflation_pct: float = 0.0
    jitter_ms: float = 0.0
    mos: float | None = None
    poor_users: int = 0
    transit_event: bool = False

    def __post_init__(self):
        if self.p50_loss_pct < 0 or self.latency_inflation_pct < 0 or self.jitter_ms < 0:
            raise ValueError("metric percentages and jitter must be >= 0")
        if self.poor_users < 0:
            raise ValueError("poor_users must be >= 0")


@dataclass(frozen=True)
class RampState:
    country: str
    dc: str
    fraction_pct: float = 0.0
    step_pct: float = 2.0
    cap_pct: float = 20.0
    priority: float = 1.0
    hold_slots: int = DEFAULT_HOLD_SLOTS
    hold_remaining: int = 0
    history: tuple[MetricSample, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not 1.0 <= self.step_pct <= 3.0:
            raise ValueError(f"step_pct must be within [1, 3], got {self.step_pct}")
        if not 0.0 <= self.fraction_pct <= self.cap_pct:
            raise ValueError(f"fraction_pct {self.fraction_pct} outside [0, {self.cap_pct}]")


@dataclass(frozen=True)
class StepResult:
    state: RampState
    action: RampAction
    fallback_users: int = 0


def classify(sample: MetricSample) -> str:
    """``"severe"``, ``"moderate"`` or ``"healthy"``."""
    if sample.p50_loss_pct >= SEVERE_LOSS_PCT:
        return "severe"
    if sample.p50_loss_pct >= HEALTHY_LOSS_FLOOR_PCT or sample.latency_inflation_pct > MAX_LATENCY_INFLATION_PCT:
        return "moderate"
    return "healthy"


def step(state: RampState, sample: MetricSample) -> StepResult:
    health = classify(sample)
    history = state.history + (sample,)
    if health == "severe":
        return StepResult(replace(state, fraction_pct=0.0, hold_remaining=state.hold_slots, history=history),
                          RampAction.EMERGENCY_BRAKE)
    if health == "moderate":
        frac = max(0.0, state.fraction_pct - state.step_pct)
        return StepResult(replace(state, fraction_pct=frac, hold_remaining=state.hold_slots, history=history),
                          RampAction.DECREMENT)
    if sample.transit_event:
        # failover to another transit peer; earlier health no longer applies
        return StepResult(replace(state, hold_remaining=state.hold_slots, history=(sample,)),
                          RampAction.TRANSIT_FAILOVER)
    if state.hold_remaining > 0:
        nxt = replace(state, hold_remaining=state.hold_remaining - 1, history=history)
        if sample.poor_users:
            return StepResult(nxt, RampAction.PER_USER_FALLBACK, sample.poor_users)
        return StepResult(nxt, RampAction.HOLD)
    if state.fraction_pct < state.cap_pct:
        inc = min(state.step_pct, state.cap_pct - state.fraction_pct)
        return StepResult(
            replace(state, fraction_pct=state.fraction_pct + inc, hold_remaining=state.hold_slots, history=history),
            RampAction.INCREMENT,
        )
    nxt = replace(state, history=history)
    if sample.poor_users:
        return StepResult(nxt, RampAction.PER_USER_FALLBACK, sample.poor_users)
    return StepResult(nxt, RampAction.HOLD)


def run_ramp(state: RampState, samples: Iterable[MetricSample]) -> list[StepResult]:
    out = []
    for s in samples:
        res = step(state, s)
        out.append(res)
        state = res.state
    return out


def allocate_capacity(
    min_peering_cap_gbps: Mapping[str, float],
    priorities: Mapping[tuple[str, str], float],
) -> dict[tuple[str, str], float]:
    """Split each dc's minimum transit-peering capacity across the countries it
    serves, proportionally to their priority.

    ``priorities`` is keyed by (country, dc); zero-priority entries get 0.
    """
    by_dc: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for (country, dc), p in sorted(priorities.items()):
        if p < 0:
            raise ValueError(f"negative priority for {country}->{dc}")
        by_dc[dc].append((country, p))
    out = {}
    for dc, entries in by_dc.items():
        cap = min_peering_cap_gbps[dc]
        total = sum(p for _, p in entries)
        for country, p in entries:
            out[(country, dc)] = cap * p / total if total > 0 else 0.0
    return out


def fractions_to_internet_cap(
    fractions_pct: Mapping[tuple[str, str], float],
    participants: Mapping[tuple[str, int], Mapping[MediaType, float]],
    resources: ResourceModel,
    budgets_gbps: Mapping[tuple[str, str], float] | None = None,
    dc_share: Mapping[tuple[str, str], float] | None = None,
) -> dict[tuple[str, int], float]:
    """Internet capacity in Gbps per (dc, slot).

    Each (country, dc) term is fraction x forecast participants from the
    country in that slot x per-participant bandwidth, optionally scaled by the
    share of the country's participants expected at that dc, then capped by
    the pair's peering budget.
    """
    dcs = sorted({dc for _, dc in fractions_pct})
    slots = sorted({s for _, s in participants})
    caps: dict[tuple[str, int], float] = {}
    for dc in dcs:
        for slot in slots:
            total = 0.0
            for (country, d), frac in sorted(fractions_pct.items()):
                if d != dc or frac <= 0:
                    continue
                by_media = participants.get((country, slot), {})
                mbps = sum(n * resources.bandwidth_mbps[m] for m, n in by_media.items())
                share = 1.0 if dc_share is None else dc_share.get((country, dc), 0.0)
                gbps = frac / 100.0 * mbps * share / 1000.0
                if budgets_gbps is not None and (country, dc) in budgets_gbps:
                    gbps = min(gbps, budgets_gbps[(country, dc)])
                total += gbps
            caps[(dc, slot)] = total
    return caps


def participants_by_country(
    demand: Mapping[tuple[int, CallConfig], float]
) -> dict[tuple[str, int], dict[MediaType, float]]:
    """Expand (slot, config) -> calls into (country, slot) -> media -> participants."""
    out: dict[tuple[str, int], dict[MediaType, float]] = defaultdict(lambda: defaultdict(float))
    for (slot, cfg), calls in demand.items():
        for country, n in cfg.participants:
            out[(country, slot)][cfg.media] += calls * n
    return {k: dict(v) for k, v in out.items()}


# -- IO ------------------------------------------------------------------------


def read_metric_streams(path: str | Path) -> dict[tuple[str, str], list[MetricSample]]:
    """CSV columns: slot, country, dc, p50_loss_pct, latency_inflation_pct and
    optionally jitter_ms, mos, poor_users, transit_event."""
    out: dict[tuple[str, str], list[MetricSample]] = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            out[(row["country"], row["dc"])].append(
                MetricSample(
                    slot=int(row["slot"]),
                    p50_loss_pct=float(row.get("p50_loss_pct") or 0),
                    latency_inflation_pct=float(row.get("latency_inflation_pct") or 0),
                    jitter_ms=float(row.get("jitter_ms") or 0),
                    mos=float(row["mos"]) if row.get("mos") else None,
                    poor_users=int(row.get("poor_users") or 0),
                    transit_event=(row.get("transit_event") or "").strip().lower() in ("1", "true", "yes"),
                )
            )
    for samples in out.values():
        samples.sort(key=lambda s: s.slot)
    return dict(sorted(out.items()))


def write_trajectory(path: str | Path, rows: Iterable[tuple[int, str, str, float, str]], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "country", "dc", "fraction_pct", "action"])
        for r in rows:
            w.writerow(r)
