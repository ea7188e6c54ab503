"""Problem instance data model: cells, contents, requests, cost parameters.

An instance bundles everything a solver needs: the cache servers with their
cache and backhaul capacities, the content catalog with sizes, the timestamped
requests with their candidate servers, the scheduling horizon, and the cost
parameters (cloud download rate, backhaul rate, and the age-penalty function).

Instances are immutable after construction and safe to share across workers.
File format is a single JSON document, schema id ``mcsp-instance/1``, all ids
1-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

INSTANCE_SCHEMA = "mcsp-instance/1"


@dataclass(frozen=True)
class ServerSpec:
    """One cache server (one cell)."""

    id: int
    cache_capacity: float
    backhaul_capacity: float


@dataclass(frozen=True)
class ContentSpec:
    """One cacheable content item; sizes are positive integers."""

    id: int
    size: int


@dataclass(frozen=True)
class AoiCost:
    """Age penalty function f(a), monotone nondecreasing in the age a.

    kind "exponential": f(a) = exp(rate * a)
    kind "linear":      f(a) = base + slope * a
    kind "table":       f(a) = values[a]  (must cover a = 0 .. horizon-1)
    """

    kind: str = "exponential"
    rate: float = 1.0
    base: float = 1.0
    slope: float = 1.0
    values: tuple[float, ...] = ()

    def __call__(self, age: int) -> float:
        if age < 0:
            raise ValueError(f"age must be nonnegative, got {age}")
        if self.kind == "exponential":
            return math.exp(self.rate * age)
        if self.kind == "linear":
            return self.base + self.slope * age
        if self.kind == "table":
            return self.values[age]
        raise ValueError(f"unknown aoi cost kind {self.kind!r}")


@dataclass(frozen=True)
class CostParams:
    """Cost coefficients: alpha (cloud download), beta (backhaul), age penalty."""

    alpha: float
    beta: float
    aoi: AoiCost = field(default_factory=AoiCost)


@dataclass(frozen=True)
class Request:
    """One content request: content, origin slot, deadline slot, candidates.

    A request with a single candidate server is an SCR (single-choice request);
    with two or more candidates it is an MCR (multiple-choice request).
    """

    id: int
    content: int
    origin: int
    deadline: int
    candidates: tuple[int, ...]

    @property
    def is_mcr(self) -> bool:
        return len(self.candidates) >= 2

    @property
    def window(self) -> int:
        """Number of slots between origin and deadline."""
        return self.deadline - self.origin


@dataclass(frozen=True)
class Topology:
    """Which server subsets may appear as candidate sets of an MCR."""

    num_servers: int
    edges: tuple[tuple[int, int], ...] = ()
    triples: tuple[tuple[int, int, int], ...] = ()

    def admits(self, candidates: tuple[int, ...]) -> bool:
        cand = tuple(sorted(candidates))
        if len(cand) == 1:
            return 1 <= cand[0] <= self.num_servers
        if len(cand) == 2:
            return cand in self.edges
        if len(cand) == 3:
            return cand in self.triples
        return False


@dataclass(frozen=True)
class Instance:
    servers: tuple[ServerSpec, ...]
    contents: tuple[ContentSpec, ...]
    requests: tuple[Request, ...]
    horizon: int
    cost: CostParams
    topology: Topology

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @property
    def num_contents(self) -> int:
        return len(self.contents)

    def server(self, h: int) -> ServerSpec:
        return self.servers[h - 1]

    def content(self, i: int) -> ContentSpec:
        return self.contents[i - 1]

    def size(self, i: int) -> int:
        return self.contents[i - 1].size

    def f(self, age: int) -> float:
        return self.cost.aoi(age)

    def cloud_cost(self, i: int) -> float:
        """Cost of serving one request for content i straight from the cloud."""
        return self.cost.aoi(0) + self.cost.alpha * self.size(i)

    @property
    def mcrs(self) -> tuple[Request, ...]:
        return tuple(r for r in self.requests if r.is_mcr)

    @property
    def scrs(self) -> tuple[Request, ...]:
        return tuple(r for r in self.requests if not r.is_mcr)


def validate_instance(inst: Instance) -> list[str]:
    """Check all structural invariants; returns one message per violation.

    Violations are data, not exceptions: an empty list means the instance is
    well formed.
    """
    out: list[str] = []
    if inst.horizon < 1:
        out.append(f"horizon: must be >= 1, got {inst.horizon}")
    for k, srv in enumerate(inst.servers, start=1):
        if srv.id != k:
            out.append(f"server {srv.id}: ids must be 1..H in order")
        if not srv.cache_capacity > 0:
            out.append(f"server {srv.id}: cache_capacity must be > 0")
        if not srv.backhaul_capacity > 0:
            out.append(f"server {srv.id}: backhaul_capacity must be > 0")
    for k, cont in enumerate(inst.contents, start=1):
        if cont.id != k:
            out.append(f"content {cont.id}: ids must be 1..I in order")
        if not (isinstance(cont.size, int) and cont.size >= 1):
            out.append(f"content {cont.id}: size must be an integer >= 1")
    if not inst.cost.alpha > inst.cost.beta > 0:
        out.append(
            f"cost: need alpha > beta > 0, got alpha={inst.cost.alpha} beta={inst.cost.beta}"
        )
    out.extend(_validate_aoi(inst.cost.aoi, inst.horizon))
    if inst.topology.num_servers != inst.num_servers:
        out.append("topology: num_servers disagrees with server list")
    seen_ids: set[int] = set()
    for r in inst.requests:
        if r.id in seen_ids:
            out.append(f"request {r.id}: duplicate id")
        seen_ids.add(r.id)
        if not (1 <= r.content <= inst.num_contents):
            out.append(f"request {r.id}: content {r.content} out of range")
        if not (1 <= r.origin <= r.deadline <= inst.horizon):
            out.append(
                f"request {r.id}: need 1 <= origin <= deadline <= horizon, "
                f"got origin={r.origin} deadline={r.deadline}"
            )
        if len(r.candidates) < 1:
            out.append(f"request {r.id}: empty candidate set")
        elif len(set(r.candidates)) != len(r.candidates):
            out.append(f"request {r.id}: repeated candidate server")
        elif any(not (1 <= h <= inst.num_servers) for h in r.candidates):
            out.append(f"request {r.id}: candidate server out of range")
        elif not inst.topology.admits(r.candidates):
            out.append(
                f"request {r.id}: candidate set {sorted(r.candidates)} "
                f"not admissible in the topology"
            )
    return out


def _validate_aoi(aoi: AoiCost, horizon: int) -> list[str]:
    out: list[str] = []
    if aoi.kind not in ("exponential", "linear", "table"):
        return [f"cost.aoi: unknown kind {aoi.kind!r}"]
    if aoi.kind == "table" and len(aoi.values) < horizon:
        return [
            f"cost.aoi: table must cover ages 0..{horizon - 1}, "
            f"has {len(aoi.values)} entries"
        ]
    vals = [aoi(a) for a in range(horizon)]
    if any(not math.isfinite(v) for v in vals):
        out.append("cost.aoi: values must be finite over the horizon")
    if any(b < a for a, b in zip(vals, vals[1:])):
        out.append("cost.aoi: must be monotone nondecreasing")
    return out


# ---------------------------------------------------------------------------
# File I/O


def instance_to_dict(inst: Instance) -> dict:
    aoi = inst.cost.aoi
    aoi_doc: dict = {"kind": aoi.kind}
    if aoi.kind == "exponential":
        aoi_doc["rate"] = aoi.rate
    elif aoi.kind == "linear":
        aoi_doc["base"] = aoi.base
        aoi_doc["slope"] = aoi.slope
    else:
        aoi_doc["values"] = list(aoi.values)
    return {
        "schema": INSTANCE_SCHEMA,
        "horizon": inst.horizon,
        "servers": [
            {"id": s.id, "cache_capacity": s.cache_capacity, "backhaul_capacity": s.backhaul_capacity}
            for s in inst.servers
        ],
        "contents": [{"id": c.id, "size": c.size} for c in inst.contents],
        "requests": [
            {
                "id": r.id,
                "content": r.content,
                "origin": r.origin,
                "deadline": r.deadline,
                "candidates": list(r.candidates),
            }
            for r in inst.requests
        ],
        "cost": {"alpha": inst.cost.alpha, "beta": inst.cost.beta, "aoi": aoi_doc},
        "topology": {
            "num_servers": inst.topology.num_servers,
            "edges": [list(e) for e in inst.topology.edges],
            "triples": [list(t) for t in inst.topology.triples],
        },
    }


def instance_from_dict(doc: dict) -> Instance:
    schema = doc.get("schema")
    if schema != INSTANCE_SCHEMA:
        raise ValueError(f"expected schema {INSTANCE_SCHEMA!r}, got {schema!r}")
    for key in ("horizon", "servers", "contents", "requests", "cost", "topology"):
        if key not in doc:
            raise ValueError(f"instance file missing required key {key!r}")
    aoi_doc = doc["cost"]["aoi"]
    kind = aoi_doc["kind"]
    if kind == "exponential":
        aoi = AoiCost(kind=kind, rate=aoi_doc.get("rate", 1.0))
    elif kind == "linear":
        aoi = AoiCost(kind=kind, base=aoi_doc.get("base", 1.0), slope=aoi_doc.get("slope", 1.0))
    elif kind == "table":
        aoi = AoiCost(kind=kind, values=tuple(aoi_doc["values"]))
    else:
        raise ValueError(f"unknown aoi cost kind {kind!r}")
    topo = doc["topology"]
    inst = Instance(
        servers=tuple(
            ServerSpec(s["id"], s["cache_capacity"], s["backhaul_capacity"])
            for s in doc["servers"]
        ),
        contents=tuple(ContentSpec(c["id"], c["size"]) for c in doc["contents"]),
        requests=tuple(
            Request(
                r["id"], r["content"], r["origin"], r["deadline"], tuple(r["candidates"])
            )
            for r in doc["requests"]
        ),
        horizon=doc["horizon"],
        cost=CostParams(alpha=doc["cost"]["alpha"], beta=doc["cost"]["beta"], aoi=aoi),
        topology=Topology(
            num_servers=topo["num_servers"],
            edges=tuple(tuple(e) for e in topo.get("edges", [])),
            triples=tuple(tuple(t) for t in topo.get("triples", [])),
        ),
    )
    problems = validate_instance(inst)
    if problems:
        raise ValueError("invalid instance file: " + "; ".join(problems[:5]))
    return inst


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1), encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Request index


class RequestIndex:
    """Precomputed request lookups used by cost evaluation and pricing.

    scr(h, i)             SCRs whose sole candidate is h and content is i.
    mcr(h, i)             MCRs with h among the candidates and content i.
    mcr_window(h, i, o, d) those of mcr(h, i) with origin o and deadline >= d.
    scr_deadline(h, i, t)  SCRs of scr(h, i) with deadline exactly t.
    scr_settle(h, i, t, back) SCRs of scr(h, i) with deadline t, origin t - back.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self._scr: dict[tuple[int, int], list[Request]] = {}
        self._mcr: dict[tuple[int, int], list[Request]] = {}
        for r in inst.requests:
            if r.is_mcr:
                for h in r.candidates:
                    self._mcr.setdefault((h, r.content), []).append(r)
            else:
                self._scr.setdefault((r.candidates[0], r.content), []).append(r)

    def scr(self, h: int, i: int) -> tuple[Request, ...]:
        return tuple(self._scr.get((h, i), ()))

    def mcr(self, h: int, i: int) -> tuple[Request, ...]:
        return tuple(self._mcr.get((h, i), ()))

    def mcr_window(self, h: int, i: int, origin: int, deadline: int) -> tuple[Request, ...]:
        return tuple(
            r for r in self._mcr.get((h, i), ())
            if r.origin == origin and r.deadline >= deadline
        )

    def scr_deadline(self, h: int, i: int, t: int) -> tuple[Request, ...]:
        return tuple(r for r in self._scr.get((h, i), ()) if r.deadline == t)

    def scr_settle(self, h: int, i: int, t: int, back: int) -> tuple[Request, ...]:
        return tuple(
            r for r in self._scr.get((h, i), ())
            if r.deadline == t and r.origin == t - back
        )

    def pairs_with_requests(self) -> Iterable[tuple[int, int]]:
        """(server, content) pairs that have at least one request attached."""
        return sorted(set(self._scr) | set(self._mcr))


def build_request_index(inst: Instance) -> RequestIndex:
    return RequestIndex(inst)
