"""Shared fixtures and instance generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hydromarket.cases import toy_two_stage
from hydromarket.system import system_from_dict


@pytest.fixture
def toy_system():
    return toy_two_stage()


def random_small_instance(seed):
    """Seeded tiny hydrothermal system with memoryless lognormal inflows,
    sized so both reference solvers stay tractable."""
    rng = np.random.Generator(np.random.Philox(seed))
    nG = int(rng.integers(1, 4))
    nH = int(rng.integers(1, 3))
    T = int(rng.integers(2, 5))
    S = int(rng.integers(1, 4))
    L = int(rng.integers(1, 4))

    thermals = [
        {
            "id": f"g{j}",
            "cost": float(rng.uniform(10.0, 200.0)),
            "capacity": float(rng.uniform(5.0, 20.0)),
        }
        for j in range(nG)
    ]
    hydros = []
    inflow = {}
    for i in range(nH):
        cap = float(rng.uniform(4.0, 12.0))
        storage = float(rng.uniform(5.0, 30.0))
        hydros.append(
            {
                "id": f"h{i}",
                "production_factor": float(rng.uniform(0.8, 1.2)),
                "max_turbine": cap,
                "max_storage": storage,
                "max_generation": cap * 1.2,
                "initial_storage": storage * float(rng.uniform(0.3, 0.9)),
            }
        )
        mean = float(rng.uniform(2.0, 6.0))
        inflow[f"h{i}"] = {
            "coefficients": 0.0,
            "residual": {"type": "lognormal", "mean": mean, "sd": 0.3 * mean},
        }
    total_cap = sum(p["capacity"] for p in thermals) + sum(
        h["max_generation"] for h in hydros
    )
    demand = [
        [float(rng.uniform(0.3, 0.8) * total_cap)] for _ in range(T)
    ]
    return system_from_dict(
        {
            "plants": {"thermal": thermals, "hydro": hydros},
            "horizon": {
                "stages": T,
                "blocks": 1,
                "scenarios": S,
                "openings": L,
                "demand": demand,
            },
            "inflow_model": inflow,
        }
    )


def single_stage_maker_system(capacity, thermal_cost=None, stages=1,
                              scenarios=1, openings=1):
    """One price maker with ``capacity`` MW of immediately available energy
    (free hydro by default, a thermal plant when a cost is given)."""
    doc = {
        "plants": {"thermal": [], "hydro": []},
        "agents": [{"id": "m", "kind": "price_maker",
                    "thermal": [], "hydro": []}],
        "horizon": {"stages": stages, "blocks": 1, "scenarios": scenarios,
                    "openings": openings,
                    "demand": [[float(capacity)]] * stages},
        "inflow_model": {},
    }
    if thermal_cost is None:
        doc["plants"]["hydro"] = [{
            "id": "h", "production_factor": 1.0, "max_turbine": capacity,
            "max_storage": capacity * stages, "max_generation": capacity,
            "initial_storage": capacity * stages,
        }]
        doc["agents"][0]["hydro"] = ["h"]
        doc["inflow_model"] = {
            "h": {"coefficients": 0.0,
                  "residual": {"type": "constant", "mean": 0.0}},
        }
    else:
        doc["plants"]["thermal"] = [{
            "id": "g", "cost": float(thermal_cost), "capacity": capacity,
        }]
        doc["agents"][0]["thermal"] = ["g"]
    return system_from_dict(doc)
