import numpy as np
import pytest

from hydromarket.dispatch import default_deficit_cost
from hydromarket.inflow import generate_scenarios
from hydromarket.oracles import (
    expected_extensive_cost,
    run_sdp_reference,
    solve_extensive_form,
)
from hydromarket.system import system_from_dict


def test_extensive_form_toy(toy_system):
    scen = generate_scenarios(toy_system.inflow_model, toy_system.horizon, 0)
    cost = solve_extensive_form(toy_system, scen, 0,
                                default_deficit_cost(toy_system))
    assert cost == pytest.approx(1000.0, rel=1e-9)


def test_sdp_toy(toy_system):
    scen = generate_scenarios(toy_system.inflow_model, toy_system.horizon, 0)
    # the optimal carried storage (10) is a grid point at 9 points over [0, 20]
    cost = run_sdp_reference(toy_system, scen,
                             default_deficit_cost(toy_system), grid_points=9)
    assert cost == pytest.approx(1000.0, rel=1e-6)


def test_sdp_rejects_serial_correlation():
    system = system_from_dict({
        "plants": {"hydro": [{
            "id": "h", "production_factor": 1.0, "max_turbine": 5.0,
            "max_storage": 10.0, "max_generation": 5.0, "initial_storage": 5.0,
        }]},
        "horizon": {"stages": 2, "scenarios": 1, "openings": 1,
                    "demand": [[1.0], [1.0]]},
        "inflow_model": {"h": {"coefficients": 0.5, "history": [2.0],
                               "residual": {"type": "constant", "mean": 1.0}}},
    })
    scen = generate_scenarios(system.inflow_model, system.horizon, 0)
    with pytest.raises(ValueError, match="memoryless"):
        run_sdp_reference(system, scen, 100.0)


def test_sdp_pure_thermal_storage_irrelevant():
    system = system_from_dict({
        "plants": {"thermal": [{"id": "g", "cost": 25.0, "capacity": 10.0}]},
        "horizon": {"stages": 3, "scenarios": 2, "openings": 2,
                    "demand": [[4.0], [4.0], [4.0]]},
    })
    scen = generate_scenarios(system.inflow_model, system.horizon, 0)
    cost = run_sdp_reference(system, scen, 250.0, grid_points=3)
    assert cost == pytest.approx(3 * 4.0 * 25.0, rel=1e-9)


def test_expected_extensive_cost_averages():
    system = system_from_dict({
        "plants": {"thermal": [{"id": "g", "cost": 10.0, "capacity": 50.0}]},
        "horizon": {"stages": 1, "scenarios": 3, "openings": 1,
                    "demand": [[30.0]]},
    })
    scen = generate_scenarios(system.inflow_model, system.horizon, 0)
    assert expected_extensive_cost(system, scen, 100.0) == pytest.approx(300.0)


def test_extensive_form_branches_over_openings():
    # one reservoir, stochastic stage-2 inflow: the tree value must reflect
    # the average over the opening pool, not any single path
    system = system_from_dict({
        "plants": {
            "thermal": [{"id": "g", "cost": 100.0, "capacity": 10.0}],
            "hydro": [{
                "id": "h", "production_factor": 1.0, "max_turbine": 10.0,
                "max_storage": 10.0, "max_generation": 10.0,
                "initial_storage": 0.0,
            }],
        },
        "horizon": {"stages": 2, "scenarios": 1, "openings": 2,
                    "demand": [[0.0], [10.0]]},
        "inflow_model": {"h": {
            "coefficients": 0.0,
            "residual": {"type": "empirical", "samples": [0.0, 10.0]},
        }},
    })
    scen = generate_scenarios(system.inflow_model, system.horizon, 0)
    cost = solve_extensive_form(system, scen, 0, 1000.0)
    pool = scen.openings[1, 0]  # stage-1 inflow residuals actually drawn
    expected = np.mean([(10.0 - min(x, 10.0)) * 100.0 for x in pool])
    assert cost == pytest.approx(expected, rel=1e-9)
