"""Schedule evaluation: age bookkeeping, request assignment, cost components.

A schedule fixes, for every (server, content) pair and slot, one of three
states: absent ('A'), cached and just updated ('U'), cached without an update
('C'). The age of a cached copy is zero at an update and grows by one per slot
while the copy stays cached without updates; a 'C' state therefore requires a
cached state in the previous slot.

Two settlement conventions decide how a request is priced against a schedule:

* ``deadline`` -- a request is served from a candidate server based on that
  server's state at the request's deadline slot. If the copy is cached there
  with age a, the best reachable age is max(0, a - window) and the request is
  served from cache unconditionally, even when the cloud would be cheaper.
  This is the convention the column pricing uses.
* ``min`` -- a request may be served in any slot of its window at the age the
  schedule realizes there, or from the cloud, whichever is cheapest.

The ``min`` assignment of a schedule never costs more than its ``deadline``
assignment, and is feasible for the exact integer formulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Optional

from .instance import Instance, Request, RequestIndex

ABSENT = "A"
UPDATED = "U"
CACHED = "C"

SettlementMode = Literal["paper", "min"]

SCHEDULE_SCHEMA = "mcsp-schedule/1"

CAPACITY_EPS = 1e-9  # slack for float capacities derived from fractions


class ScheduleError(ValueError):
    """Raised for state sequences whose age is not derivable."""


@dataclass(frozen=True)
class Schedule:
    """Per (server, content) state strings over the horizon.

    Pairs absent from ``states`` are implicitly all-'A' (never cached).
    """

    horizon: int
    states: dict[tuple[int, int], str]

    def state(self, h: int, i: int) -> str:
        return self.states.get((h, i), ABSENT * self.horizon)

    def pairs(self) -> Iterable[tuple[int, int]]:
        return sorted(self.states)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEDULE_SCHEMA,
            "horizon": self.horizon,
            "states": {f"{h}:{i}": s for (h, i), s in sorted(self.states.items())},
        }

    @staticmethod
    def from_dict(doc: dict) -> "Schedule":
        if doc.get("schema") != SCHEDULE_SCHEMA:
            raise ValueError(f"expected schema {SCHEDULE_SCHEMA!r}, got {doc.get('schema')!r}")
        states = {}
        for key, s in doc["states"].items():
            h, i = key.split(":")
            states[(int(h), int(i))] = s
        return Schedule(horizon=doc["horizon"], states=states)


Served = tuple[int, int, int]  # (server, slot, age)


@dataclass(frozen=True)
class AssignmentPlan:
    """How each request is served: a (server, slot, age) triple or the cloud."""

    served: dict[int, Optional[Served]]  # request id -> triple, or None for cloud

    def cache_served(self, r_id: int) -> Optional[Served]:
        return self.served.get(r_id)


@dataclass(frozen=True)
class CostBreakdown:
    aoi_cost: float
    download_cost: float
    update_cost: float

    @property
    def total(self) -> float:
        return self.aoi_cost + self.download_cost + self.update_cost

    def to_dict(self) -> dict:
        return {
            "aoi_cost": self.aoi_cost,
            "download_cost": self.download_cost,
            "update_cost": self.update_cost,
            "total": self.total,
        }


def derive_aoi(states: str) -> list[Optional[int]]:
    """Per-slot age of one (server, content) state string, None when absent."""
    ages: list[Optional[int]] = []
    prev: Optional[int] = None
    for t, st in enumerate(states, start=1):
        if st == UPDATED:
            prev = 0
        elif st == CACHED:
            if prev is None:
                raise ScheduleError(
                    f"slot {t}: cached-without-update requires a cached predecessor"
                )
            prev = prev + 1
        elif st == ABSENT:
            prev = None
        else:
            raise ScheduleError(f"slot {t}: unknown state {st!r}")
        ages.append(prev)
    return ages


def schedule_aoi(schedule: Schedule, h: int, i: int) -> list[Optional[int]]:
    return derive_aoi(schedule.state(h, i))


def _deadline_option(ages: list[Optional[int]], r: Request) -> Optional[tuple[int, int]]:
    """(slot, age) the deadline settlement realizes for r, or None if uncached."""
    age_at_deadline = ages[r.deadline - 1]
    if age_at_deadline is None:
        return None
    best_age = max(0, age_at_deadline - r.window)
    # that age is realized at the slot where the copy had it
    slot = r.deadline - min(age_at_deadline, r.window)
    return slot, best_age


def derive_assignment(
    schedule: Schedule, inst: Instance, mode: SettlementMode = "min"
) -> AssignmentPlan:
    """Serve every request against a fixed schedule.

    mode 'min': cheapest of the cloud and every cached (slot, age) in the
    window, over all candidate servers. Ties prefer cache over cloud, then the
    lowest age, then the lowest server id, then the earliest slot.

    mode 'paper': deadline settlement as described in the module docstring;
    the request goes to the cloud only if no candidate holds the content at
    the deadline slot.
    """
    ages_cache: dict[tuple[int, int], list[Optional[int]]] = {}

    def ages_for(h: int, i: int) -> list[Optional[int]]:
        key = (h, i)
        if key not in ages_cache:
            ages_cache[key] = schedule_aoi(schedule, h, i)
        return ages_cache[key]

    served: dict[int, Optional[Served]] = {}
    for r in inst.requests:
        options: list[tuple[float, int, int, int]] = []  # (cost, age, server, slot)
        if mode == "min":
            for h in r.candidates:
                ages = ages_for(h, r.content)
                for t in range(r.origin, r.deadline + 1):
                    a = ages[t - 1]
                    if a is not None:
                        options.append((inst.f(a), a, h, t))
            cloud = inst.cloud_cost(r.content)
            if options:
                options.sort()
                cost, a, h, t = options[0]
                served[r.id] = (h, t, a) if cost <= cloud else None
            else:
                served[r.id] = None
        else:
            for h in r.candidates:
                opt = _deadline_option(ages_for(h, r.content), r)
                if opt is not None:
                    slot, age = opt
                    options.append((inst.f(age), age, h, slot))
            if options:
                options.sort()
                _, a, h, t = options[0]
                served[r.id] = (h, t, a)  # unconditional: no cloud fallback
            else:
                served[r.id] = None
    return AssignmentPlan(served=served)


def aoi_cost(plan: AssignmentPlan, inst: Instance) -> float:
    """Sum of f(age) over cache-served requests plus f(0) per cloud request."""
    total = 0.0
    for r in inst.requests:
        hit = plan.served.get(r.id)
        total += inst.f(hit[2]) if hit is not None else inst.f(0)
    return total


def download_cost(plan: AssignmentPlan, inst: Instance) -> float:
    """alpha times the total size of cloud-served requests."""
    total = 0.0
    for r in inst.requests:
        if plan.served.get(r.id) is None:
            total += inst.size(r.content)
    return inst.cost.alpha * total


def update_cost(schedule: Schedule, inst: Instance) -> float:
    """beta times the total size downloaded over the backhaul."""
    total = 0
    for (h, i), states in schedule.states.items():
        total += states.count(UPDATED) * inst.size(i)
    return inst.cost.beta * total


def evaluate(schedule: Schedule, inst: Instance, mode: SettlementMode) -> CostBreakdown:
    plan = derive_assignment(schedule, inst, mode)
    return plan_cost(schedule, plan, inst)


def plan_cost(schedule: Schedule, plan: AssignmentPlan, inst: Instance) -> CostBreakdown:
    return CostBreakdown(
        aoi_cost=aoi_cost(plan, inst),
        download_cost=download_cost(plan, inst),
        update_cost=update_cost(schedule, inst),
    )


def check_feasibility(schedule: Schedule, inst: Instance) -> list[str]:
    """Verify state-string validity plus per-slot cache and backhaul capacity."""
    out: list[str] = []
    cache_load = {(h, t): 0 for h in range(1, inst.num_servers + 1) for t in range(1, inst.horizon + 1)}
    backhaul_load = dict(cache_load)
    for (h, i), states in schedule.states.items():
        if len(states) != inst.horizon:
            out.append(f"({h},{i}): state string length {len(states)} != horizon")
            continue
        if not (1 <= h <= inst.num_servers) or not (1 <= i <= inst.num_contents):
            out.append(f"({h},{i}): unknown server or content")
            continue
        try:
            derive_aoi(states)
        except ScheduleError as exc:
            out.append(f"({h},{i}): {exc}")
            continue
        size = inst.size(i)
        for t, st in enumerate(states, start=1):
            if st in (UPDATED, CACHED):
                cache_load[(h, t)] += size
            if st == UPDATED:
                backhaul_load[(h, t)] += size
    for (h, t), load in sorted(cache_load.items()):
        cap = inst.server(h).cache_capacity
        if load > cap + CAPACITY_EPS:
            out.append(f"server {h} slot {t}: cache load {load} exceeds capacity {cap}")
    for (h, t), load in sorted(backhaul_load.items()):
        cap = inst.server(h).backhaul_capacity
        if load > cap + CAPACITY_EPS:
            out.append(f"server {h} slot {t}: backhaul load {load} exceeds capacity {cap}")
    return out


def check_plan(plan: AssignmentPlan, schedule: Schedule, inst: Instance) -> list[str]:
    """Verify that a plan only claims (server, slot, age) the schedule realizes."""
    out = []
    for r in inst.requests:
        hit = plan.served.get(r.id)
        if hit is None:
            continue
        h, t, a = hit
        if h not in r.candidates:
            out.append(f"request {r.id}: served by non-candidate server {h}")
            continue
        if not (r.origin <= t <= r.deadline):
            out.append(f"request {r.id}: served outside its window at slot {t}")
            continue
        ages = schedule_aoi(schedule, h, r.content)
        if ages[t - 1] != a:
            out.append(
                f"request {r.id}: schedule realizes age {ages[t - 1]} at "
                f"({h},{t}), plan claims {a}"
            )
    return out
