"""Column pricing: shortest paths in a per-(server, content) state DAG.

For one (server, content) pair, the minimum-reduced-cost column is found as a
shortest source-to-sink path in a layered DAG. Slot layers hold two node
families:

* uncached(t, gap) -- the copy is absent in slot t and has not been updated
  for ``gap`` consecutive slots (gap counts slot t; gap = t means never).
* cached(t, age)   -- the copy is cached in slot t with the given age.

Arcs between consecutive layers:

* gray   (into uncached): weight 0, the copy stays or becomes absent.
* update (into cached(t, 0)): blue from cached(t-1, 0), black from
  cached(t-1, age), red from uncached(t-1, gap). Weight: the backhaul cost
  of the download, minus the cloud download of the single-choice requests
  settling at t, plus the age-zero service credits of the multiple-choice
  requests that arrived since the previous update, minus the cache and
  backhaul capacity prices.
* purple (cached(t-1, a-1) -> cached(t, a)): the deadline settlement of the
  single-choice requests due at t, plus the age-a service credit of the
  multiple-choice requests arriving at t, minus the cache capacity price.
* orange (slot-T nodes -> sink): the cloud default of all the pair's
  single-choice requests, minus the pair's convexity dual.

Path length equals the column's reduced cost against the master duals
(verified exhaustively in tests), so the shortest path prices the pool
exactly. All gaps share the same red-arc weight formula, which is what lets
one node per (t, gap) replace the per-history nodes of the naive
construction; the collapse is checked against an uncollapsed reference.

Ties between equal paths prefer fewer updates, then the lexicographically
earliest update slots, then dropping over keeping the copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .columns import Column, ColumnPool
from .costs import SettlementMode
from .instance import Instance, RequestIndex
from .rmp import DualPrices

INF = math.inf

TOL_PRICE = 1e-6


@dataclass(frozen=True)
class PricedColumn:
    h: int
    i: int
    column: Column
    path_value: float  # equals the column's reduced cost


def g_aux(h: int, i: int, o: int, d: int, a: int, duals: DualPrices, idx: RequestIndex) -> float:
    """Service-credit sum over the pair's MCRs arriving at o with deadline >= d."""
    return sum(duals.pi(r, h, a) for r in idx.mcr_window(h, i, o, d))


class PairWeights:
    """All arc weights for one (server, content) pair at the given duals."""

    def __init__(
        self,
        h: int,
        i: int,
        duals: DualPrices,
        inst: Instance,
        idx: RequestIndex,
        mode: SettlementMode,
    ):
        self.h, self.i = h, i
        self.horizon = T = inst.horizon
        size = inst.size(i)
        cloud = inst.cloud_cost(i)
        scrs = idx.scr(h, i)
        mcrs = idx.mcr(h, i)

        # deadline-t SCR counts and their settlement deltas on purple arcs
        n_xi = np.zeros(T + 1)
        psi = np.zeros((T + 1, T + 1))  # [t, a] for a >= 1
        for r in scrs:
            n_xi[r.deadline] += 1
            for a in range(1, T):
                reach = inst.f(max(0, a - r.window))
                if mode == "min":
                    reach = min(reach, cloud)
                psi[r.deadline, a] += reach - cloud

        # age-zero credits: g0[tau, t] sums pi(r, h, 0) over MCRs arriving at
        # tau whose deadline reaches t
        g0 = np.zeros((T + 2, T + 2))
        ga = np.zeros((T + 1, T + 1))  # [t, a] age-a credits for arrivals at t
        for r in mcrs:
            g0[r.origin, 1 : r.deadline + 1] += duals.pi(r, h, 0)
            for a in range(1, r.deadline):
                pi = duals.pi(r, h, a)
                if pi:
                    ga[r.origin, a] += pi
        cum = np.cumsum(g0, axis=0)  # over arrival slots

        mu = np.array([0.0] + [duals.mu(h, t) for t in range(1, T + 1)])
        phi = np.array([0.0] + [duals.phi(h, t) for t in range(1, T + 1)])
        base_upd = (
            inst.cost.beta * size
            - n_xi * inst.cost.alpha * size
            - size * (mu + phi)
        )

        # update[t, w]: into cached(t, 0) from a predecessor last updated w+1
        # slots ago (w = 0 blue, w >= 1 black/red)
        self.update = np.full((T + 1, T + 1), INF)
        for t in range(1, T + 1):
            for w in range(0, t):
                self.update[t, w] = base_upd[t] + (cum[t, t] - cum[t - w - 1, t])
        # purple[t, a]: into cached(t, a)
        self.purple = np.full((T + 1, T + 1), INF)
        for t in range(2, T + 1):
            for a in range(1, t):
                self.purple[t, a] = psi[t, a] + ga[t, a] - size * mu[t]
        self.orange = len(scrs) * cloud - duals.lam(h, i)


def _default_masks(T: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    allow = np.ones(T + 1, dtype=bool)
    return allow.copy(), allow.copy(), allow.copy()


@dataclass
class PricingGraph:
    """Explicit per-pair DAG: nodes, weighted arcs, and removal masks."""

    h: int
    i: int
    horizon: int
    weights: PairWeights
    allow_uncached: np.ndarray  # [t], all uncached(t, *) removed when False
    allow_cached_zero: np.ndarray  # [t], cached(t, 0) removed when False
    allow_cached_aged: np.ndarray  # [t], cached(t, age>=1) removed when False

    def arcs(self) -> list[tuple[tuple, tuple, float, str]]:
        """Materialize the arc list (for tests and DOT dumps)."""
        T = self.horizon
        out: list[tuple[tuple, tuple, float, str]] = []

        def unc(t, gap):
            return ("uncached", t, gap)

        def cac(t, age):
            return ("cached", t, age)

        if self.allow_uncached[1]:
            out.append((("source",), unc(1, 1), 0.0, "gray"))
        if self.allow_cached_zero[1]:
            out.append((("source",), cac(1, 0), self.weights.update[1, 0], "blue"))
        for t in range(2, T + 1):
            if self.allow_uncached[t - 1]:
                for gap in range(1, t):  # uncached(t-1, gap) sources
                    if self.allow_uncached[t]:
                        out.append((unc(t - 1, gap), unc(t, gap + 1), 0.0, "gray"))
                    if self.allow_cached_zero[t]:
                        out.append((unc(t - 1, gap), cac(t, 0), self.weights.update[t, gap], "red"))
            for age in range(0, t - 1):  # cached(t-1, age) sources
                if age == 0 and not self.allow_cached_zero[t - 1]:
                    continue
                if age >= 1 and not self.allow_cached_aged[t - 1]:
                    continue
                if self.allow_uncached[t]:
                    out.append((cac(t - 1, age), unc(t, age + 1), 0.0, "gray"))
                if self.allow_cached_zero[t]:
                    kind = "blue" if age == 0 else "black"
                    out.append((cac(t - 1, age), cac(t, 0), self.weights.update[t, age], kind))
                if self.allow_cached_aged[t]:
                    out.append((cac(t - 1, age), cac(t, age + 1), self.weights.purple[t, age + 1], "purple"))
        for gap in range(1, T + 1):
            if self.allow_uncached[T]:
                out.append((unc(T, gap), ("sink",), self.weights.orange, "orange"))
        for age in range(0, T):
            if (age == 0 and self.allow_cached_zero[T]) or (age >= 1 and self.allow_cached_aged[T]):
                out.append((cac(T, age), ("sink",), self.weights.orange, "orange"))
        return out

    def to_dot(self) -> str:
        colors = {"gray": "gray", "orange": "orange", "blue": "blue",
                  "black": "black", "red": "red", "purple": "purple"}
        lines = ["digraph pricing {", "  rankdir=LR;"]
        for u, v, w, kind in self.arcs():
            name_u = "_".join(str(x) for x in u)
            name_v = "_".join(str(x) for x in v)
            lines.append(
                f'  {name_u} -> {name_v} [label="{w:.4g}", color={colors[kind]}];'
            )
        lines.append("}")
        return "\n".join(lines)


def build_graph(
    h: int,
    i: int,
    duals: DualPrices,
    inst: Instance,
    idx: RequestIndex,
    fixings=None,
    mode: SettlementMode = "paper",
) -> PricingGraph:
    T = inst.horizon
    if fixings is None:
        allow_u, allow_k0, allow_ka = _default_masks(T)
    else:
        allow_u, allow_k0, allow_ka = fixings.mask_arrays(h, i, T)
    return PricingGraph(
        h=h,
        i=i,
        horizon=T,
        weights=PairWeights(h, i, duals, inst, idx, mode),
        allow_uncached=allow_u,
        allow_cached_zero=allow_k0,
        allow_cached_aged=allow_ka,
    )


class NoPathError(RuntimeError):
    """The removal masks disconnected source from sink."""


def shortest_path(graph: PricingGraph) -> PricedColumn:
    """Exact minimum path and its decoded column."""
    value, column = _solve_pair(
        graph.horizon,
        graph.weights.update,
        graph.weights.purple,
        graph.weights.orange,
        graph.allow_uncached,
        graph.allow_cached_zero,
        graph.allow_cached_aged,
    )
    return PricedColumn(h=graph.h, i=graph.i, column=column, path_value=value)


def _forward_tables(T, upd, pur, allow_u, allow_k0, allow_ka):
    dk = np.full((T + 1, T + 1), INF)
    dth = np.full((T + 1, T + 1), INF)
    if allow_u[1]:
        dth[1, 1] = 0.0
    if allow_k0[1]:
        dk[1, 0] = upd[1, 0]
    for t in range(2, T + 1):
        if allow_k0[t]:
            best = INF
            for w in range(0, t):
                prev = min(
                    dk[t - 1, w] if w <= t - 2 else INF,
                    dth[t - 1, w] if w >= 1 else INF,
                )
                cand = prev + upd[t, w]
                if cand < best:
                    best = cand
            dk[t, 0] = best
        if allow_ka[t]:
            for a in range(1, t):
                dk[t, a] = dk[t - 1, a - 1] + pur[t, a]
        if allow_u[t]:
            dth[t, 1] = dk[t - 1, 0]
            for xi in range(2, t + 1):
                dth[t, xi] = min(
                    dth[t - 1, xi - 1],
                    dk[t - 1, xi - 1] if xi - 1 <= t - 2 else INF,
                )
    return dk, dth


def _backward_tables(T, upd, pur, orange, allow_u, allow_k0, allow_ka):
    bk = np.full((T + 1, T + 1), INF)
    bth = np.full((T + 1, T + 1), INF)
    for a in range(0, T):
        if (a == 0 and allow_k0[T]) or (a >= 1 and allow_ka[T]):
            bk[T, a] = orange
    if allow_u[T]:
        bth[T, 1 : T + 1] = orange
    for t in range(T, 1, -1):
        for a in range(0, t - 1):  # cached(t-1, a)
            if (a == 0 and not allow_k0[t - 1]) or (a >= 1 and not allow_ka[t - 1]):
                continue
            best = INF
            if allow_k0[t]:
                best = upd[t, a] + bk[t, 0]
            if a + 1 <= t - 1 and allow_ka[t]:
                best = min(best, pur[t, a + 1] + bk[t, a + 1])
            if allow_u[t]:
                best = min(best, bth[t, a + 1])
            bk[t - 1, a] = best
        for xi in range(1, t):  # uncached(t-1, xi)
            if not allow_u[t - 1]:
                break
            best = INF
            if allow_k0[t]:
                best = upd[t, xi] + bk[t, 0]
            if allow_u[t]:
                best = min(best, bth[t, xi + 1])
            bth[t - 1, xi] = best
    return bk, bth


def _solve_pair(T, upd, pur, orange, allow_u, allow_k0, allow_ka):
    """Min path value plus the decoded column under the tie-break rules."""
    dk, dth = _forward_tables(T, upd, pur, allow_u, allow_k0, allow_ka)
    bk, bth = _backward_tables(T, upd, pur, orange, allow_u, allow_k0, allow_ka)
    value = min(float(np.min(dk[T])), float(np.min(dth[T]))) + orange
    if math.isinf(value):
        raise NoPathError("fixings disconnected the pricing graph")
    eps = 1e-9 * (1.0 + abs(value))

    def on_opt_k(t, a, dist):
        return dist + bk[t, a] <= value + eps

    def on_opt_th(t, xi, dist):
        return dist + bth[t, xi] <= value + eps

    # minimum update count over optimal arcs, backward from the sink
    uk = np.full((T + 1, T + 1), 10**9)
    uth = np.full((T + 1, T + 1), 10**9)
    uk[T, : T][~np.isinf(bk[T, : T])] = 0
    uth[T, 1 : T + 1][~np.isinf(bth[T, 1 : T + 1])] = 0
    for t in range(T, 1, -1):
        for a in range(0, t - 1):
            if math.isinf(bk[t - 1, a]):
                continue
            best = 10**9
            if allow_k0[t] and upd[t, a] + bk[t, 0] <= bk[t - 1, a] + eps:
                best = min(best, 1 + uk[t, 0])
            if a + 1 <= t - 1 and allow_ka[t] and pur[t, a + 1] + bk[t, a + 1] <= bk[t - 1, a] + eps:
                best = min(best, uk[t, a + 1])
            if allow_u[t] and bth[t, a + 1] <= bk[t - 1, a] + eps:
                best = min(best, uth[t, a + 1])
            uk[t - 1, a] = best
        for xi in range(1, t):
            if math.isinf(bth[t - 1, xi]):
                continue
            best = 10**9
            if allow_k0[t] and upd[t, xi] + bk[t, 0] <= bth[t - 1, xi] + eps:
                best = min(best, 1 + uk[t, 0])
            if allow_u[t] and bth[t, xi + 1] <= bth[t - 1, xi] + eps:
                best = min(best, uth[t, xi + 1])
            uth[t - 1, xi] = best

    # forward walk: earliest feasible updates first, then drop, then keep
    col: list[tuple[int, int]] = []
    start_k = allow_k0[1] and on_opt_k(1, 0, upd[1, 0])
    start_th = allow_u[1] and on_opt_th(1, 1, 0.0)
    total_upd = min(
        (1 + uk[1, 0]) if start_k else 10**9,
        uth[1, 1] if start_th else 10**9,
    )
    if start_k and 1 + uk[1, 0] == total_upd:
        state, dist, upd_done = ("k", 0), upd[1, 0], 1
        col.append((1, 1))
    else:
        state, dist, upd_done = ("th", 1), 0.0, 0
        col.append((0, 0))
    for t in range(2, T + 1):
        kind, pos = state
        moved = False
        # update arc first: earliest update slots win
        w = pos if kind == "k" else pos
        if allow_k0[t] and not math.isinf(upd[t, w]):
            nd = dist + upd[t, w]
            if on_opt_k(t, 0, nd) and upd_done + 1 + uk[t, 0] == total_upd:
                state, dist, upd_done, moved = ("k", 0), nd, upd_done + 1, True
                col.append((1, 1))
        if not moved and allow_u[t]:  # drop
            nxt = pos + 1
            if on_opt_th(t, nxt, dist) and upd_done + uth[t, nxt] == total_upd:
                state, moved = ("th", nxt), True
                col.append((0, 0))
        if not moved and kind == "k" and allow_ka[t] and pos + 1 <= t - 1:  # keep
            nd = dist + pur[t, pos + 1]
            if on_opt_k(t, pos + 1, nd) and upd_done + uk[t, pos + 1] == total_upd:
                state, dist, moved = ("k", pos + 1), nd, True
                col.append((1, 0))
        if not moved:
            raise AssertionError("optimal-path walk got stuck; tie tolerance too tight")
    return value, tuple(col)


# ---------------------------------------------------------------------------
# Batch pricing across all pairs


class PricingStatics:
    """Per-instance tables that do not depend on the duals."""

    def __init__(self, inst: Instance, idx: RequestIndex, mode: SettlementMode):
        self.inst, self.idx, self.mode = inst, idx, mode
        T = inst.horizon
        self.pairs = [
            (h, i)
            for h in range(1, inst.num_servers + 1)
            for i in range(1, inst.num_contents + 1)
        ]
        self.pair_pos = {hi: k for k, hi in enumerate(self.pairs)}
        K = len(self.pairs)
        self.size = np.array([inst.size(i) for _, i in self.pairs], dtype=float)
        self.cloud = np.array([inst.cloud_cost(i) for _, i in self.pairs])
        self.n_scr = np.zeros(K)
        self.n_xi = np.zeros((K, T + 1))
        self.psi = np.zeros((K, T + 1, T + 1))
        for k, (h, i) in enumerate(self.pairs):
            scrs = idx.scr(h, i)
            self.n_scr[k] = len(scrs)
            cloud = self.cloud[k]
            for r in scrs:
                self.n_xi[k, r.deadline] += 1
                for a in range(1, T):
                    reach = inst.f(max(0, a - r.window))
                    if mode == "min":
                        reach = min(reach, cloud)
                    self.psi[k, r.deadline, a] += reach - cloud
        # MCR fill lists: (k, request, origin, deadline) in deterministic order
        self.mcr_refs = [
            (k, r) for k, (h, i) in enumerate(self.pairs) for r in idx.mcr(h, i)
        ]


class Pricer:
    """Solves every pair subproblem in one vectorized pass."""

    def __init__(self, statics: PricingStatics):
        self.s = statics

    def price(
        self, duals: DualPrices, fixings=None
    ) -> tuple[np.ndarray, "PricerTables"]:
        s = self.s
        inst = s.inst
        T = inst.horizon
        K = len(s.pairs)
        g0 = np.zeros((K, T + 2, T + 2))
        ga = np.zeros((K, T + 1, T + 1))
        for k, r in s.mcr_refs:
            h = s.pairs[k][0]
            g0[k, r.origin, 1 : r.deadline + 1] += duals.pi(r, h, 0)
            for a in range(1, r.deadline):
                pi = duals.pi(r, h, a)
                if pi:
                    ga[k, r.origin, a] += pi
        cum = np.cumsum(g0, axis=1)

        mu = np.zeros((K, T + 1))
        phi = np.zeros((K, T + 1))
        lam = np.zeros(K)
        for k, (h, i) in enumerate(s.pairs):
            lam[k] = duals.lam(h, i)
            for t in range(1, T + 1):
                mu[k, t] = duals.mu(h, t)
                phi[k, t] = duals.phi(h, t)

        base_upd = (
            inst.cost.beta * s.size[:, None]
            - s.n_xi * inst.cost.alpha * s.size[:, None]
            - s.size[:, None] * (mu + phi)
        )
        upd = np.full((K, T + 1, T + 1), INF)
        for t in range(1, T + 1):
            for w in range(0, t):
                upd[:, t, w] = base_upd[:, t] + (cum[:, t, t] - cum[:, t - w - 1, t])
        pur = np.full((K, T + 1, T + 1), INF)
        for t in range(2, T + 1):
            for a in range(1, t):
                pur[:, t, a] = s.psi[:, t, a] + ga[:, t, a] - s.size * mu[:, t]
        orange = s.n_scr * s.cloud - lam

        if fixings is None:
            allow_u = np.ones((K, T + 1), dtype=bool)
            allow_k0 = np.ones((K, T + 1), dtype=bool)
            allow_ka = np.ones((K, T + 1), dtype=bool)
        else:
            allow_u, allow_k0, allow_ka = fixings.batch_masks(s.pairs, T)

        dk = np.full((K, T + 1, T + 1), INF)
        dth = np.full((K, T + 1, T + 1), INF)
        dth[allow_u[:, 1], 1, 1] = 0.0
        dk[allow_k0[:, 1], 1, 0] = upd[allow_k0[:, 1], 1, 0]
        for t in range(2, T + 1):
            prevmin = np.full((K, t), INF)
            prevmin[:, 0] = dk[:, t - 1, 0]
            if t >= 2:
                w = np.arange(1, t)
                prev_k = dk[:, t - 1, 1 : t]
                prev_k = np.where(w[None, :] <= t - 2, prev_k, INF)
                prevmin[:, 1:] = np.minimum(prev_k, dth[:, t - 1, 1 : t])
            cand = prevmin + upd[:, t, :t]
            val = np.min(cand, axis=1)
            dk[:, t, 0] = np.where(allow_k0[:, t], val, INF)
            aged = dk[:, t - 1, 0 : t - 1] + pur[:, t, 1 : t]
            dk[:, t, 1 : t] = np.where(allow_ka[:, t, None], aged, INF)
            th = np.full((K, t), INF)
            th[:, 0] = dk[:, t - 1, 0]
            if t >= 3:
                xi = np.arange(2, t + 1)
                from_k = dk[:, t - 1, 1 : t]
                from_k = np.where(xi[None, :] - 1 <= t - 2, from_k, INF)
                th[:, 1:] = np.minimum(dth[:, t - 1, 1 : t], from_k)
            elif t == 2:
                th[:, 1] = dth[:, 1, 1]
            dth[:, t, 1 : t + 1] = np.where(allow_u[:, t, None], th, INF)
        values = (
            np.minimum(np.min(dk[:, T, :], axis=1), np.min(dth[:, T, :], axis=1))
            + orange
        )
        return values, PricerTables(upd, pur, orange, allow_u, allow_k0, allow_ka)


@dataclass
class PricerTables:
    upd: np.ndarray
    pur: np.ndarray
    orange: np.ndarray
    allow_u: np.ndarray
    allow_k0: np.ndarray
    allow_ka: np.ndarray


def price_all(
    pool: ColumnPool,
    duals: DualPrices,
    inst: Instance,
    idx: RequestIndex,
    fixings=None,
    mode: SettlementMode = "paper",
    tol: float = TOL_PRICE,
    statics: Optional[PricingStatics] = None,
) -> list[PricedColumn]:
    """One candidate column per pair with reduced cost below -tol, skipping
    columns already pooled. Results come back in (server, content) order."""
    s = statics if statics is not None else PricingStatics(inst, idx, mode)
    values, tables = Pricer(s).price(duals, fixings)
    out: list[PricedColumn] = []
    T = inst.horizon
    for k in np.nonzero(values < -tol)[0]:
        h, i = s.pairs[k]
        value, column = _solve_pair(
            T,
            tables.upd[k],
            tables.pur[k],
            float(tables.orange[k]),
            tables.allow_u[k],
            tables.allow_k0[k],
            tables.allow_ka[k],
        )
        if pool.contains(h, i, column):
            continue
        out.append(PricedColumn(h=h, i=i, column=column, path_value=value))
    return out
