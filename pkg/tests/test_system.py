import json

import numpy as np
import pytest

from hydromarket.cases import duopoly, panama_like
from hydromarket.system import (
    ValidationError,
    agent_partition,
    load_system,
    system_from_dict,
    system_view,
)

MINIMAL = {
    "plants": {"thermal": [{"id": "g1", "cost": 50.0, "capacity": 10.0}]},
    "horizon": {"stages": 1, "scenarios": 1, "openings": 1, "demand": [[5.0]]},
}


def test_minimal_file():
    system = system_from_dict(MINIMAL)
    assert len(system.thermals) == 1
    assert system.thermal("g1").cost == 50.0
    assert len(system.agents) == 1  # implicit single owner
    assert system.horizon.stages == 1


def test_load_from_file(tmp_path):
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(MINIMAL))
    system = load_system(path)
    assert system.thermal("g1").capacity == 10.0


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"plants": \n !')
    with pytest.raises(ValidationError, match="line 2"):
        load_system(path)


def _hydro(hid, downstream=None, **kw):
    base = dict(production_factor=1.0, max_turbine=1.0, max_storage=1.0,
                max_generation=1.0, initial_storage=0.0)
    base.update(kw)
    return {"id": hid, "downstream": downstream, **base}


def test_cascade_cycle_rejected():
    doc = {
        "plants": {"hydro": [_hydro("A", "B"), _hydro("B", "A")]},
        "horizon": {"stages": 1, "demand": [[0.0]]},
    }
    with pytest.raises(ValidationError, match="cycle"):
        system_from_dict(doc)


def test_duplicate_plant_id_rejected():
    doc = {
        "plants": {"thermal": [{"id": "g", "cost": 1, "capacity": 1},
                               {"id": "g", "cost": 2, "capacity": 1}]},
        "horizon": {"stages": 1, "demand": [[0.0]]},
    }
    with pytest.raises(ValidationError, match="duplicate"):
        system_from_dict(doc)


def test_unowned_plant_rejected():
    doc = {
        "plants": {"thermal": [{"id": "g", "cost": 1, "capacity": 1}]},
        "agents": [{"id": "a", "kind": "price_taker"}],
        "horizon": {"stages": 1, "demand": [[0.0]]},
    }
    with pytest.raises(ValidationError, match="not owned"):
        system_from_dict(doc)


def test_overlapping_ownership_rejected():
    doc = {
        "plants": {"thermal": [{"id": "g", "cost": 1, "capacity": 1}]},
        "agents": [
            {"id": "a", "kind": "price_taker", "thermal": ["g"]},
            {"id": "b", "kind": "price_taker", "thermal": ["g"]},
        ],
        "horizon": {"stages": 1, "demand": [[0.0]]},
    }
    with pytest.raises(ValidationError, match="disjoint"):
        system_from_dict(doc)


def test_demand_shape_rejected():
    doc = {
        "plants": {"thermal": [{"id": "g", "cost": 1, "capacity": 1}]},
        "horizon": {"stages": 2, "demand": [[0.0]]},
    }
    with pytest.raises(ValidationError, match="demand"):
        system_from_dict(doc)


def test_partition_sizes():
    doc = {
        "plants": {"thermal": [{"id": f"g{i}", "cost": 1, "capacity": 1}
                               for i in range(3)]},
        "agents": [
            {"id": "a", "kind": "price_taker", "thermal": ["g0", "g1"]},
            {"id": "b", "kind": "price_taker", "thermal": ["g2"]},
        ],
        "horizon": {"stages": 1, "demand": [[0.0]]},
    }
    system = system_from_dict(doc)
    va, ca = agent_partition(system, "a")
    vb, cb = agent_partition(system, "b")
    assert len(va.thermals) == 2 and len(ca.thermals) == 1
    assert len(vb.thermals) == 1 and len(cb.thermals) == 2
    # partition property: every plant in exactly one view
    ids = {p.id for p in va.thermals} | {p.id for p in vb.thermals}
    assert ids == {p.id for p in system.thermals}
    assert not ({p.id for p in va.thermals} & {p.id for p in vb.thermals})


def test_single_owner_complement_empty():
    system = system_from_dict(MINIMAL)
    view, complement = agent_partition(system, system.agents[0].id)
    assert len(view.thermals) == 1
    assert complement.thermals == () and complement.hydros == ()


def test_system_view_covers_everything():
    system = duopoly(stages=2, scenarios=2, openings=2)
    view = system_view(system)
    assert len(view.thermals) == len(system.thermals)
    assert len(view.hydros) == len(system.hydros)


def test_panama_like_scale():
    system = panama_like(stages=2, scenarios=2, openings=2)
    assert len(system.thermals) == 22
    assert len(system.hydros) == 42
    assert len(system.agents) == 4
    assert sum(p.capacity for p in system.thermals) == pytest.approx(1145.0)
    assert sum(h.max_generation for h in system.hydros) == pytest.approx(1674.0)


def test_to_dict_round_trip():
    system = duopoly(stages=3, scenarios=2, openings=2)
    clone = system_from_dict(system.to_dict())
    assert [p.id for p in clone.thermals] == [p.id for p in system.thermals]
    assert clone.hydro("hA").max_storage == system.hydro("hA").max_storage
    assert np.array_equal(clone.horizon.demand, system.horizon.demand)
    assert {a.id for a in clone.agents} == {a.id for a in system.agents}
    spec_a = clone.inflow_model.spec("hA")
    spec_b = system.inflow_model.spec("hA")
    assert spec_a.residual == spec_b.residual
    assert np.array_equal(spec_a.coeffs, spec_b.coeffs)
