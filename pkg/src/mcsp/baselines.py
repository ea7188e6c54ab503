"""Baselines: popularity-driven caching, a tiny exact oracle, ILP export.

The popularity baseline ranks contents by total request count and walks the
horizon slot by slot: refresh cached contents whose age penalty has reached
half their cloud download cost, then admit uncached contents while cache and
backhaul headroom lasts. Nothing is ever evicted.

The exact oracle searches per-pair column combinations depth-first with
capacity and bound pruning; it is deliberately capped at toy sizes and exists
to anchor the optimality tests. The ILP exporter writes the flat binary
formulation in LP text format for external cross-checks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

from .columns import column_ages, column_states, enumerate_columns, zero_column
from .costs import (
    CAPACITY_EPS,
    Schedule,
    SettlementMode,
    derive_assignment,
    evaluate,
    plan_cost,
)
from .driver import SolveReport
from .instance import Instance, Request
from .simplex import EQ, GE, LE, write_lp_text


class CapsExceededError(ValueError):
    """Instance too large for the exhaustive oracle."""


@dataclass(frozen=True)
class OracleCaps:
    max_servers: int = 2
    max_contents: int = 3
    max_horizon: int = 4
    max_requests: int = 12


def run_pba(inst: Instance) -> SolveReport:
    """Popularity-based caching heuristic."""
    started = time.perf_counter()
    counts = {i: 0 for i in range(1, inst.num_contents + 1)}
    for r in inst.requests:
        counts[r.content] += 1
    ranking = sorted(counts, key=lambda i: (-counts[i], i))

    states: dict[tuple[int, int], list[str]] = {}
    for h in range(1, inst.num_servers + 1):
        srv = inst.server(h)
        cached: dict[int, int] = {}  # content -> last update slot
        cache_used = 0.0
        rows = {i: ["A"] * inst.horizon for i in range(1, inst.num_contents + 1)}
        for t in range(1, inst.horizon + 1):
            backhaul_used = 0.0
            for i in ranking:  # refresh pass
                if i not in cached:
                    continue
                rows[i][t - 1] = "C"
                age = t - cached[i]
                size = inst.size(i)
                if inst.f(age) >= inst.cost.alpha * size / 2:
                    if backhaul_used + size <= srv.backhaul_capacity + CAPACITY_EPS:
                        cached[i] = t
                        rows[i][t - 1] = "U"
                        backhaul_used += size
            for i in ranking:  # admit pass
                if i in cached:
                    continue
                size = inst.size(i)
                if (
                    cache_used + size <= srv.cache_capacity + CAPACITY_EPS
                    and backhaul_used + size <= srv.backhaul_capacity + CAPACITY_EPS
                ):
                    cached[i] = t
                    cache_used += size
                    backhaul_used += size
                    rows[i][t - 1] = "U"
        for i, row in rows.items():
            if any(ch != "A" for ch in row):
                states[(h, i)] = "".join(row)

    schedule = Schedule(horizon=inst.horizon, states=states)
    assignment = derive_assignment(schedule, inst, "min")
    cost = plan_cost(schedule, assignment, inst)
    return SolveReport(
        algorithm="pba",
        settlement_mode="min",
        cost=cost,
        settled_cost=cost,
        lower_bound=None,
        gap=None,
        pricing_rounds=0,
        rounding_rounds=0,
        wall_time_s=time.perf_counter() - started,
        schedule=schedule,
        assignment=assignment,
    )


def solve_exact(
    inst: Instance,
    mode: SettlementMode = "paper",
    caps: OracleCaps = OracleCaps(),
) -> SolveReport:
    """Exhaustive optimum over per-pair column choices, toy sizes only."""
    started = time.perf_counter()
    if (
        inst.num_servers > caps.max_servers
        or inst.num_contents > caps.max_contents
        or inst.horizon > caps.max_horizon
        or len(inst.requests) > caps.max_requests
    ):
        raise CapsExceededError(
            f"exact oracle capped at H<={caps.max_servers} I<={caps.max_contents} "
            f"T<={caps.max_horizon} R<={caps.max_requests}"
        )
    T = inst.horizon
    columns = enumerate_columns(T)
    ages_of = [column_ages(col) for col in columns]
    n_updates = [sum(p for _, p in col) for col in columns]
    # content-major order settles each content's requests after few levels
    pairs = [
        (h, i)
        for i in range(1, inst.num_contents + 1)
        for h in range(1, inst.num_servers + 1)
    ]
    # dominated-column elimination: caching past the pair's last deadline
    # only adds cost, and pairs nobody requests never benefit from caching
    last_deadline: dict[tuple[int, int], int] = {hi: 0 for hi in pairs}
    for r in inst.requests:
        for h in r.candidates:
            key = (h, r.content)
            last_deadline[key] = max(last_deadline[key], r.deadline)
    candidate_cols: dict[tuple[int, int], list[int]] = {}
    for hi in pairs:
        dmax = last_deadline[hi]
        candidate_cols[hi] = [
            k for k, col in enumerate(columns)
            if all(q == 0 for q, _ in col[dmax:])
        ]
    # requests settle once every candidate pair has been assigned
    level: dict[int, int] = {}
    pair_pos = {hi: d for d, hi in enumerate(pairs)}
    for r in inst.requests:
        level[r.id] = max(pair_pos[(h, r.content)] for h in r.candidates)
    by_level: dict[int, list[Request]] = {}
    for r in inst.requests:
        by_level.setdefault(level[r.id], []).append(r)
    # optimistic floor for requests not settled yet: the age penalty at zero
    floor_after = [0.0] * (len(pairs) + 1)
    for d in range(len(pairs) - 1, -1, -1):
        floor_after[d] = floor_after[d + 1] + sum(
            inst.f(0) for r in by_level.get(d, [])
        )

    # service value of each column for each request, cloud not yet folded in
    svc: dict[int, list[float]] = {}
    for r in inst.requests:
        per_col = []
        for k, col in enumerate(columns):
            ages = ages_of[k]
            if mode == "min":
                val = math.inf
                for t in range(r.origin, r.deadline + 1):
                    a = ages[t - 1]
                    if a is not None:
                        val = min(val, inst.f(a))
            else:
                a = ages[r.deadline - 1]
                val = math.inf if a is None else inst.f(max(0, a - r.window))
            per_col.append(val)
        svc[r.id] = per_col

    cache_cap = [inst.server(h).cache_capacity for h in range(1, inst.num_servers + 1)]
    backhaul_cap = [
        inst.server(h).backhaul_capacity for h in range(1, inst.num_servers + 1)
    ]
    cache_load = [[0.0] * (T + 1) for _ in range(inst.num_servers + 1)]
    backhaul_load = [[0.0] * (T + 1) for _ in range(inst.num_servers + 1)]
    chosen: dict[tuple[int, int], int] = {}  # pair -> column index
    best = {"cost": math.inf, "schedule": None}

    def request_cost(r: Request) -> float:
        served = min(svc[r.id][chosen[(h, r.content)]] for h in r.candidates)
        cloud = inst.cloud_cost(r.content)
        if mode == "min":
            return min(served, cloud)
        return cloud if math.isinf(served) else served

    def dfs(depth: int, acc: float) -> None:
        if acc + floor_after[depth] >= best["cost"] - 1e-12:
            return
        if depth == len(pairs):
            states = {
                hi: column_states(columns[k])
                for hi, k in chosen.items()
                if columns[k] != zero_column(T)
            }
            schedule = Schedule(horizon=T, states=states)
            total = evaluate(schedule, inst, mode).total
            assert abs(total - acc) <= 1e-9 * (1 + abs(total))
            if total < best["cost"] - 1e-12:
                best["cost"] = total
                best["schedule"] = schedule
            return
        h, i = pairs[depth]
        size = inst.size(i)
        beta_size = inst.cost.beta * size
        ch, bh = cache_load[h], backhaul_load[h]
        c_cap, b_cap = cache_cap[h - 1] + CAPACITY_EPS, backhaul_cap[h - 1] + CAPACITY_EPS
        settlers = by_level.get(depth, ())
        for k in candidate_cols[(h, i)]:
            col = columns[k]
            ok = True
            for t, (q, p) in enumerate(col, start=1):
                if q and ch[t] + size > c_cap:
                    ok = False
                    break
                if p and bh[t] + size > b_cap:
                    ok = False
                    break
            if not ok:
                continue
            for t, (q, p) in enumerate(col, start=1):
                ch[t] += size * q
                bh[t] += size * p
            chosen[(h, i)] = k
            settled = 0.0
            for r in settlers:
                settled += request_cost(r)
            dfs(depth + 1, acc + beta_size * n_updates[k] + settled)
            del chosen[(h, i)]
            for t, (q, p) in enumerate(col, start=1):
                ch[t] -= size * q
                bh[t] -= size * p

    dfs(0, 0.0)
    schedule = best["schedule"]
    assert schedule is not None
    assignment = derive_assignment(schedule, inst, mode)
    cost = plan_cost(schedule, assignment, inst)
    assert abs(cost.total - best["cost"]) <= 1e-9 * (1 + abs(cost.total))
    return SolveReport(
        algorithm="exact",
        settlement_mode=mode,
        cost=cost,
        settled_cost=cost,
        lower_bound=None,
        gap=None,
        pricing_rounds=0,
        rounding_rounds=0,
        wall_time_s=time.perf_counter() - started,
        schedule=schedule,
        assignment=assignment,
    )


# ---------------------------------------------------------------------------
# Flat binary formulation in LP text format


def ilp_variable_names(inst: Instance) -> dict[str, list[str]]:
    """Stable naming scheme: x_h_i_t_a, z_h_i_t, y_r_h_a (all 1-based ids)."""
    xs, zs, ys = [], [], []
    for h in range(1, inst.num_servers + 1):
        for i in range(1, inst.num_contents + 1):
            for t in range(1, inst.horizon + 1):
                zs.append(f"z_{h}_{i}_{t}")
                for a in range(0, t):
                    xs.append(f"x_{h}_{i}_{t}_{a}")
    for r in inst.requests:
        for h in r.candidates:
            for a in range(0, r.deadline):
                ys.append(f"y_{r.id}_{h}_{a}")
    return {"x": xs, "z": zs, "y": ys}


def export_ilp(inst: Instance, path) -> None:
    """Write the flat binary formulation for external solvers.

    Objective: per-request service deltas on the y variables plus backhaul
    cost on the age-zero x variables plus the all-cloud constant.
    """
    objective: list[tuple[str, float]] = []
    constant = sum(inst.cloud_cost(r.content) for r in inst.requests)
    for r in inst.requests:
        for h in r.candidates:
            for a in range(0, r.deadline):
                coef = inst.f(a) - inst.cloud_cost(r.content)
                objective.append((f"y_{r.id}_{h}_{a}", coef))
    for h in range(1, inst.num_servers + 1):
        for i in range(1, inst.num_contents + 1):
            for t in range(1, inst.horizon + 1):
                objective.append((f"x_{h}_{i}_{t}_0", inst.cost.beta * inst.size(i)))

    rows = []
    for h in range(1, inst.num_servers + 1):
        for i in range(1, inst.num_contents + 1):
            for t in range(2, inst.horizon + 1):  # age evolution
                for a in range(1, t):
                    rows.append(
                        (
                            f"age_{h}_{i}_{t}_{a}",
                            [(f"x_{h}_{i}_{t - 1}_{a - 1}", 1.0), (f"x_{h}_{i}_{t}_{a}", -1.0)],
                            GE,
                            0.0,
                        )
                    )
            for t in range(1, inst.horizon + 1):  # cached iff some age realized
                terms = [(f"x_{h}_{i}_{t}_{a}", 1.0) for a in range(0, t)]
                terms.append((f"z_{h}_{i}_{t}", -1.0))
                rows.append((f"def_{h}_{i}_{t}", terms, EQ, 0.0))
    for r in inst.requests:  # serve at most once
        terms = [
            (f"y_{r.id}_{h}_{a}", 1.0)
            for h in r.candidates
            for a in range(0, r.deadline)
        ]
        rows.append((f"once_{r.id}", terms, LE, 1.0))
        for h in r.candidates:  # service needs a matching cached age in window
            for a in range(0, r.deadline):
                terms = [(f"y_{r.id}_{h}_{a}", 1.0)]
                for t in range(max(r.origin, a + 1), r.deadline + 1):
                    terms.append((f"x_{h}_{r.content}_{t}_{a}", -1.0))
                rows.append((f"cover_{r.id}_{h}_{a}", terms, LE, 0.0))
    for h in range(1, inst.num_servers + 1):
        for t in range(1, inst.horizon + 1):
            terms = [
                (f"z_{h}_{i}_{t}", float(inst.size(i)))
                for i in range(1, inst.num_contents + 1)
            ]
            rows.append((f"cache_{h}_{t}", terms, LE, inst.server(h).cache_capacity))
            terms = [
                (f"x_{h}_{i}_{t}_0", float(inst.size(i)))
                for i in range(1, inst.num_contents + 1)
            ]
            rows.append((f"backhaul_{h}_{t}", terms, LE, inst.server(h).backhaul_capacity))

    names = ilp_variable_names(inst)
    binaries = names["x"] + names["z"] + names["y"]
    text = write_lp_text(objective=objective, rows=rows, binaries=binaries, constant=constant)
    Path(path).write_text(text, encoding="utf-8")
