"""Assignment-policy protocol shared by the controller, the baselines and the
simulator, plus the oracle-mode executor for precomputed plans."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .model import ROUTES, CallConfig, CallRecord, ResourceModel, Route, Topology, reduce_config

MODES = ("oracle", "first-joiner", "reveal")


class NoCapacityError(RuntimeError):
    """Raised by a policy that cannot place a call anywhere."""


@dataclass
class SimContext:
    """What a policy may look at when placing a call.

    ``compute_left`` (cores) and ``internet_left`` (Mbps) are keyed by
    (slot, dc) and reflect every call placed so far.
    """

    topology: Topology
    resources: ResourceModel
    mode: str = "oracle"
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    dc_cores: Mapping[str, float] = field(default_factory=dict)
    internet_fractions: Mapping[tuple[str, str], float] = field(default_factory=dict)
    compute_left: dict[tuple[int, str], float] = field(default_factory=dict)
    internet_left: dict[tuple[int, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def visible_countries(self, call: CallRecord) -> tuple[str, ...]:
        """Countries a policy may use: all of them with an oracle, else the
        first joiner's."""
        return call.config.countries if self.mode == "oracle" else (call.first_country,)


class Policy:
    name = "policy"

    def assign(self, call: CallRecord, ctx: SimContext) -> tuple[str, Route]:
        raise NotImplementedError

    def converge(self, call: CallRecord, current: tuple[str, Route], ctx: SimContext) -> tuple[str, Route] | None:
        """Post-convergence target, or None to keep the current assignment."""
        return None


class PlanOraclePolicy(Policy):
    """Executes a plan when every call's true config is known at join.

    Calls of a (slot, config) are handed the option with the most
    still-unassigned planned calls, so realised counts track the plan to
    within one call per option.
    """

    def __init__(self, plan, reduced: bool = True, name: str = "planned"):
        self.plan = plan
        self.reduced = reduced
        self.name = name
        self._remaining: dict[tuple[int, CallConfig], dict[tuple[str, Route], float]] = {}

    def _key(self, call: CallRecord) -> tuple[CallConfig, int]:
        cfg = call.config
        if self.reduced:
            return reduce_config(cfg)
        return cfg, 1

    def assign(self, call: CallRecord, ctx: SimContext) -> tuple[str, Route]:
        cfg, units = self._key(call)
        key = (call.slot, cfg)
        rem = self._remaining.get(key)
        if rem is None:
            rem = self.plan.allocation(call.slot, cfg)
            if not rem:
                raise NoCapacityError(f"plan has no allocation for {cfg.key()} in slot {call.slot}")
            self._remaining[key] = rem
        # most still-unassigned calls first; ties go to the lower dc id, WAN first
        best = min(rem, key=lambda o: (-rem[o], o[0], ROUTES.index(o[1])))
        rem[best] -= units
        return best
