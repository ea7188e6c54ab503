import dataclasses
import json
import random

import pytest

from mcsp.generator import (
    GeneratorConfig,
    Topology,
    generate_instance,
    parse_ratio,
    seven_cell_topology,
    three_cell_topology,
)
from mcsp.instance import (
    Request,
    build_request_index,
    instance_to_dict,
    load_instance,
    save_instance,
    validate_instance,
)

from conftest import TWO_CELL, random_tiny_instance


def test_tiny1_fixture_loads(tiny1):
    assert tiny1.num_servers == 1
    assert tiny1.num_contents == 1
    assert tiny1.size(1) == 2
    assert len(tiny1.requests) == 1
    r = tiny1.requests[0]
    assert not r.is_mcr and r.origin == 1 and r.deadline == 2
    assert tiny1.cloud_cost(1) == pytest.approx(23.0)
    assert validate_instance(tiny1) == []


def test_roundtrip_identity(tmp_path):
    cfg = GeneratorConfig(cells="3-cell", num_contents=12, num_requests=40, horizon=6, seed=7)
    inst = generate_instance(cfg)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    assert load_instance(path) == inst


def test_load_missing_horizon_is_schema_error(tmp_path, tiny1):
    doc = instance_to_dict(tiny1)
    del doc["horizon"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="horizon"):
        load_instance(path)


def test_load_rejects_wrong_schema(tmp_path, tiny1):
    doc = instance_to_dict(tiny1)
    doc["schema"] = "mcsp-instance/999"
    path = tmp_path / "wrong.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="schema"):
        load_instance(path)


def test_validate_flags_bad_window(tiny1):
    bad = dataclasses.replace(
        tiny1, requests=(Request(1, 1, origin=2, deadline=1, candidates=(1,)),)
    )
    problems = validate_instance(bad)
    assert len(problems) == 1 and "request 1" in problems[0]


def test_validate_flags_non_adjacent_candidates():
    topo = Topology(num_servers=3, edges=((1, 2),), triples=())
    inst = generate_instance(
        GeneratorConfig(
            cells="custom", custom_topology=topo, num_contents=2, num_requests=0,
            horizon=3, rho_m=0.0, seed=1,
        )
    )
    bad = dataclasses.replace(inst, requests=(Request(1, 1, 1, 2, candidates=(1, 3)),))
    problems = validate_instance(bad)
    assert len(problems) == 1 and "not admissible" in problems[0]


def test_generator_deterministic_and_counts():
    cfg = GeneratorConfig(
        cells="3-cell", num_contents=100, num_requests=500, horizon=12,
        rho_m=0.4, rho_tt=1.0, rho_b=0.3, seed=123,
    )
    a = generate_instance(cfg)
    b = generate_instance(cfg)
    assert a == b
    mcrs = [r for r in a.requests if r.is_mcr]
    assert len(mcrs) == 200
    assert sum(1 for r in mcrs if len(r.candidates) == 3) == 100
    assert sum(1 for r in mcrs if len(r.candidates) == 2) == 100
    total = sum(c.size for c in a.contents)
    for srv in a.servers:
        assert srv.cache_capacity == pytest.approx(total / 2)
        assert srv.backhaul_capacity == pytest.approx(0.3 * total)


def test_generator_empty_requests_valid():
    inst = generate_instance(
        GeneratorConfig(cells="3-cell", num_contents=5, num_requests=0, rho_m=0.0, seed=9)
    )
    assert inst.requests == ()
    assert validate_instance(inst) == []


def test_generator_rejects_triples_without_topology():
    with pytest.raises(ValueError, match="no triples"):
        generate_instance(
            GeneratorConfig(
                cells="custom", custom_topology=TWO_CELL,
                num_contents=4, num_requests=10, rho_m=0.5, rho_tt=1.0, seed=3,
            )
        )


def test_generated_instances_always_validate():
    rng = random.Random(42)
    for _ in range(25):
        inst = random_tiny_instance(rng)
        assert validate_instance(inst) == []


def test_seven_cell_topology_shape():
    topo = seven_cell_topology()
    assert topo.num_servers == 7
    assert len(topo.edges) == 12  # 6 spokes + 6 ring edges
    assert len(topo.triples) == 6
    assert all(1 in t for t in topo.triples)


def test_parse_ratio():
    assert parse_ratio("1:1") == 1.0
    assert parse_ratio("3:1") == 3.0
    assert parse_ratio("1:3") == pytest.approx(1 / 3)
    assert parse_ratio("0:1") == 0.0
    assert parse_ratio(2.5) == 2.5


def test_request_index_tiny1(tiny1, tiny1_idx):
    r1 = tiny1.requests[0]
    assert tiny1_idx.scr(1, 1) == (r1,)
    assert tiny1_idx.scr_deadline(1, 1, 2) == (r1,)
    assert tiny1_idx.scr_deadline(1, 1, 1) == ()
    assert tiny1_idx.mcr_window(1, 1, 1, 1) == ()


def test_request_index_mcr_appears_per_candidate():
    topo = three_cell_topology()
    inst = generate_instance(
        GeneratorConfig(cells="3-cell", num_contents=3, num_requests=0, horizon=4, seed=5)
    )
    r = Request(1, 2, 1, 3, candidates=(1, 2))
    inst = dataclasses.replace(inst, requests=(r,), topology=topo)
    idx = build_request_index(inst)
    assert idx.mcr(1, 2) == (r,)
    assert idx.mcr(2, 2) == (r,)
    assert idx.mcr(3, 2) == ()
    assert idx.mcr_window(1, 2, 1, 3) == (r,)
    assert idx.mcr_window(1, 2, 1, 4) == ()  # deadline filter is d_r >= d


def test_index_partitions_requests():
    rng = random.Random(7)
    for _ in range(10):
        inst = random_tiny_instance(rng)
        idx = build_request_index(inst)
        n_scr = sum(
            len(idx.scr(h, i))
            for h in range(1, inst.num_servers + 1)
            for i in range(1, inst.num_contents + 1)
        )
        assert n_scr == len(inst.scrs)
        for r in inst.mcrs:
            hits = sum(
                1
                for h in range(1, inst.num_servers + 1)
                if r in idx.mcr(h, r.content)
            )
            assert hits == len(r.candidates)
