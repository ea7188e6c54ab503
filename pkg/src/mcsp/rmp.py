"""Restricted master problem: build, solve, duals, direct reduced costs.

The master minimizes the sum of selected column costs plus the service cost
of the multiple-choice requests. Per MCR r, candidate server h and age a, a
service variable y gives the saving (f(a) - f(0) - alpha*s) against the cloud
default, which is carried as a constant in the objective. Rows:

* serve-once:   sum of a request's y variables <= 1
* coverage:     y_{rha} <= sum of selected columns that can serve (r, a)
* cache:        per (server, slot), sum of cached sizes <= cache capacity
* backhaul:     per (server, slot), sum of updated sizes <= backhaul capacity
* convexity:    per (server, content), exactly one column selected

Coverage uses the settlement convention of the pricing graph: a column can
serve (r, a) at the age it holds when the request arrives, or at age zero
when it updates inside the request window. Service variables that can never
pay off (f(a) >= cloud cost) and coverage rows no pool column supports are
left out of the LP; their duals are imputed so that the returned DualPrices
is a complete optimal dual vector for the full row set (the imputation is
exercised by the certificate tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .columns import Column, ColumnPool, settlement_coverage
from .instance import Instance, Request, RequestIndex
from .simplex import EQ, LE, LpProblem, LpSolution, solve_lp

TOL_CHI = 1e-6  # integrality tolerance on column weights


@dataclass
class DualPrices:
    """Optimal duals of the master rows, complete over the full row set.

    ``pi`` entries exist for every (MCR, candidate server, age) triple with
    0 <= age <= deadline - 1: rows present in the LP report their dual, the
    rest are imputed (zero when the service could never pay off, otherwise
    min(0, saving - serve-once dual)).
    """

    inst: Instance
    sigma: dict[int, float]
    pi_rows: dict[tuple[int, int, int], float]
    mu_rows: dict[tuple[int, int], float]
    phi_rows: dict[tuple[int, int], float]
    lam_rows: dict[tuple[int, int], float]
    # True for duals read off a master solve: entries for rows the LP left
    # out are imputed to complete the optimality certificate. Explicitly
    # constructed dual vectors (tests, verification) leave this False and
    # treat missing entries as zero.
    impute: bool = False

    def pi(self, r: Request, h: int, a: int) -> float:
        key = (r.id, h, a)
        if key in self.pi_rows:
            return self.pi_rows[key]
        if not self.impute:
            return 0.0
        saving = self.inst.f(a) - self.inst.cloud_cost(r.content)
        if saving >= 0:
            return 0.0
        return min(0.0, saving - self.sigma.get(r.id, 0.0))

    def mu(self, h: int, t: int) -> float:
        return self.mu_rows.get((h, t), 0.0)

    def phi(self, h: int, t: int) -> float:
        return self.phi_rows.get((h, t), 0.0)

    def lam(self, h: int, i: int) -> float:
        return self.lam_rows.get((h, i), 0.0)


@dataclass
class RmpModel:
    """An assembled master LP plus the maps needed to read the solution back."""

    problem: LpProblem
    pool: ColumnPool
    constant: float
    chi_offset: dict[tuple[int, int], int]  # first LP column of each pair's block
    y_keys: list[tuple[int, int, int]]  # (request id, server, age) per y variable
    n_chi: int
    serve_rows: dict[int, int]
    cover_rows: dict[tuple[int, int, int], int]
    cache_rows: dict[tuple[int, int], int]
    backhaul_rows: dict[tuple[int, int], int]
    convexity_rows: dict[tuple[int, int], int]


@dataclass
class RmpSolution:
    objective: float  # includes the MCR cloud-cost constant
    chi: dict[tuple[int, int], np.ndarray]  # per pair, aligned with pool entries
    y: dict[tuple[int, int, int], float]
    duals: DualPrices
    lp: LpSolution

    def chi_is_integral(self, tol: float = TOL_CHI) -> bool:
        return all(
            bool(np.all((v < tol) | (v > 1 - tol))) for v in self.chi.values()
        )

    def integral_column(self, h: int, i: int, pool: ColumnPool) -> Column:
        weights = self.chi[(h, i)]
        k = int(np.argmax(weights))
        if weights[k] < 1 - TOL_CHI:
            raise ValueError(f"column weights for ({h},{i}) are fractional")
        return pool.columns(h, i)[k].column


def service_saving(inst: Instance, i: int, a: int) -> float:
    """Objective coefficient of a service variable: f(a) minus the cloud cost."""
    return inst.f(a) - inst.cloud_cost(i)


def mcr_cloud_constant(inst: Instance) -> float:
    return sum(inst.cloud_cost(r.content) for r in inst.requests if r.is_mcr)


def build_rmp(pool: ColumnPool, inst: Instance, idx: RequestIndex) -> RmpModel:
    """Assemble the master LP over the current pools."""
    pairs = sorted(pool.entries)
    for key in pairs:
        if not pool.entries[key]:
            raise ValueError(f"empty pool for pair {key}")

    # which (r, h, a) are coverable by the current pools and worth serving
    active: dict[tuple[int, int, int], list[tuple[int, int]]] = {}
    req_by_id = {r.id: r for r in inst.requests}
    for (h, i) in pairs:
        for k, entry in enumerate(pool.entries[(h, i)]):
            for r_id, a in entry.coverage:
                if service_saving(inst, i, a) < 0:
                    active.setdefault((r_id, h, a), []).append((h, i))

    y_keys = sorted(active)
    mcr_with_y = sorted({r_id for r_id, _, _ in y_keys})

    n_chi = sum(len(pool.entries[key]) for key in pairs)
    chi_offset: dict[tuple[int, int], int] = {}
    off = 0
    for key in pairs:
        chi_offset[key] = off
        off += len(pool.entries[key])
    n_vars = n_chi + len(y_keys)

    serve_rows = {r_id: n for n, r_id in enumerate(mcr_with_y)}
    base = len(serve_rows)
    cover_rows = {key: base + n for n, key in enumerate(y_keys)}
    base += len(cover_rows)
    ht_pairs = [
        (h, t) for h in range(1, inst.num_servers + 1) for t in range(1, inst.horizon + 1)
    ]
    cache_rows = {ht: base + n for n, ht in enumerate(ht_pairs)}
    base += len(cache_rows)
    backhaul_rows = {ht: base + n for n, ht in enumerate(ht_pairs)}
    base += len(backhaul_rows)
    convexity_rows = {key: base + n for n, key in enumerate(pairs)}
    n_rows = base + len(convexity_rows)

    c = np.zeros(n_vars)
    upper = np.full(n_vars, np.inf)
    rows_ix: list[int] = []
    cols_ix: list[int] = []
    vals: list[float] = []

    col = 0
    for (h, i) in pairs:
        size = inst.size(i)
        for entry in pool.entries[(h, i)]:
            c[col] = entry.cost
            for r_id, a in entry.coverage:
                row = cover_rows.get((r_id, h, a))
                if row is not None:
                    rows_ix.append(row)
                    cols_ix.append(col)
                    vals.append(-1.0)
            for t in entry.q_slots:
                rows_ix.append(cache_rows[(h, t)])
                cols_ix.append(col)
                vals.append(float(size))
            for t in entry.p_slots:
                rows_ix.append(backhaul_rows[(h, t)])
                cols_ix.append(col)
                vals.append(float(size))
            rows_ix.append(convexity_rows[(h, i)])
            cols_ix.append(col)
            vals.append(1.0)
            col += 1

    for n, (r_id, h, a) in enumerate(y_keys):
        j = n_chi + n
        r = req_by_id[r_id]
        c[j] = service_saving(inst, r.content, a)
        upper[j] = 1.0
        rows_ix.append(serve_rows[r_id])
        cols_ix.append(j)
        vals.append(1.0)
        rows_ix.append(cover_rows[(r_id, h, a)])
        cols_ix.append(j)
        vals.append(1.0)

    a_matrix = sparse.csr_matrix(
        (np.array(vals), (np.array(rows_ix, dtype=np.int64), np.array(cols_ix, dtype=np.int64))),
        shape=(n_rows, n_vars),
    )
    rel = np.empty(n_rows, dtype=int)
    b = np.empty(n_rows)
    from .simplex import _REL_CODES  # row codes shared with the LP layer

    for r_id, row in serve_rows.items():
        rel[row], b[row] = _REL_CODES[LE], 1.0
    for key, row in cover_rows.items():
        rel[row], b[row] = _REL_CODES[LE], 0.0
    for (h, t), row in cache_rows.items():
        rel[row], b[row] = _REL_CODES[LE], inst.server(h).cache_capacity
    for (h, t), row in backhaul_rows.items():
        rel[row], b[row] = _REL_CODES[LE], inst.server(h).backhaul_capacity
    for key, row in convexity_rows.items():
        rel[row], b[row] = _REL_CODES[EQ], 1.0

    problem = LpProblem(c=c, a_matrix=a_matrix, rel=rel, b=b, upper=upper)
    return RmpModel(
        problem=problem,
        pool=pool,
        constant=mcr_cloud_constant(inst),
        chi_offset=chi_offset,
        y_keys=y_keys,
        n_chi=n_chi,
        serve_rows=serve_rows,
        cover_rows=cover_rows,
        cache_rows=cache_rows,
        backhaul_rows=backhaul_rows,
        convexity_rows=convexity_rows,
    )


def solve_rmp(model: RmpModel, backend: str = "auto", canonical: bool = False) -> RmpSolution:
    """Solve the master; with ``canonical`` the primal is re-selected on the
    optimal face to minimize update count, then update lateness.

    Degenerate masters have many optimal vertices and which one a solver
    returns can depend on immaterial input details (e.g. the slack of a
    never-binding capacity row). The rounding passes consume the primal, so a
    canonical vertex keeps the dive, and with it the heuristic's output,
    stable across such perturbations. Duals, objective and the bound always
    come from the primary solve.
    """
    sol = solve_lp(model.problem, backend=backend)
    x = sol.x
    if canonical:
        x = _canonical_primal(model, sol, backend)
    pool = model.pool
    chi = {}
    for key, off in model.chi_offset.items():
        chi[key] = x[off : off + len(pool.entries[key])].copy()
    y = {
        key: float(x[model.n_chi + n]) for n, key in enumerate(model.y_keys)
    }
    duals = DualPrices(
        inst=pool.inst,
        sigma={r_id: float(sol.duals[row]) for r_id, row in model.serve_rows.items()},
        pi_rows={key: float(sol.duals[row]) for key, row in model.cover_rows.items()},
        mu_rows={ht: float(sol.duals[row]) for ht, row in model.cache_rows.items()},
        phi_rows={ht: float(sol.duals[row]) for ht, row in model.backhaul_rows.items()},
        lam_rows={key: float(sol.duals[row]) for key, row in model.convexity_rows.items()},
        impute=True,
    )
    return RmpSolution(
        objective=sol.objective + model.constant,
        chi=chi,
        y=y,
        duals=duals,
        lp=sol,
    )


def _canonical_primal(model: RmpModel, sol, backend: str) -> np.ndarray:
    """Secondary solve over the optimal face: prefer fewer updates, then
    earlier update slots (mirrors the pricing tie-break)."""
    prob = model.problem
    pool = model.pool
    w = np.zeros(prob.num_vars)
    col = 0
    for key in sorted(pool.entries):
        for entry in pool.entries[key]:
            w[col] = len(entry.p_slots) + sum(entry.p_slots) / 100.0
            col += 1
    face_eps = 1e-7 * (1.0 + abs(sol.objective))
    face_row = sparse.csr_matrix(prob.c.reshape(1, -1))
    prob2 = LpProblem(
        c=w,
        a_matrix=sparse.vstack([prob.a_matrix, face_row]).tocsr(),
        rel=np.concatenate([prob.rel, [0]]),  # the face row is a <= row
        b=np.concatenate([prob.b, [sol.objective + face_eps]]),
        upper=prob.upper,
    )
    try:
        second = solve_lp(prob2, backend=backend)
    except Exception:
        return sol.x  # canonicalization is best-effort
    return second.x


def reduced_cost(
    col: Column,
    h: int,
    i: int,
    duals: DualPrices,
    idx: RequestIndex,
    cost_S: Optional[float] = None,
    mode: str = "paper",
) -> float:
    """Reduced cost of a column against the given duals.

    The coverage term follows the settlement convention (see module
    docstring), which is what makes it coincide with the pricing graph's
    shortest-path value.
    """
    from .columns import column_cost_S

    inst = duals.inst
    if cost_S is None:
        cost_S = column_cost_S(col, h, i, inst, idx, mode)  # type: ignore[arg-type]
    total = cost_S
    for r in idx.mcr(h, i):
        arrival_age, upd = settlement_coverage(col, r)
        if arrival_age is not None and arrival_age >= 1:
            total += duals.pi(r, h, arrival_age)
        if upd:
            total += duals.pi(r, h, 0)
    size = inst.size(i)
    for t, (q, p) in enumerate(col, start=1):
        if q:
            total -= size * duals.mu(h, t)
        if p:
            total -= size * duals.phi(h, t)
    return total - duals.lam(h, i)
