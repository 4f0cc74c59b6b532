"""Turning a value function into a bid curve under price uncertainty.

An agent with a 10 MW thermal plant (cost 15) must commit quantities to
price "boxes" {10, 20, 30} before the spot realizes; the four equiprobable
spot outcomes are {5, 15, 25, 35}. A box clears whenever its price is at or
below the spot. Cheap boxes clear often but are paid little; the optimum
puts all 10 MW in the 30 box, which clears only at spot 35 but is the only
placement with a positive expected margin over cost.
"""

import numpy as np

from hydromarket.inflow import generate_scenarios
from hydromarket.optbid import acceptance, solve_optbid
from hydromarket.sddp import BENEFIT, FutureValueFunction, StageState
from hydromarket.system import agent_partition, system_from_dict

system = system_from_dict({
    "plants": {"thermal": [{"id": "g", "cost": 15.0, "capacity": 10.0}]},
    "agents": [{"id": "a", "kind": "price_maker", "thermal": ["g"]}],
    "horizon": {"stages": 1, "scenarios": 1, "openings": 1, "demand": [[10.0]]},
})
grid = np.array([10.0, 20.0, 30.0])
spots = np.array([[5.0, 15.0, 25.0, 35.0]])

phi = acceptance(grid, spots)
print("acceptance matrix (box x spot outcome):")
for n, price in enumerate(grid):
    print(f"  box {price:4.0f}:", phi[0, n].astype(int))

view, _ = agent_partition(system, "a")
scenarios = generate_scenarios(system.inflow_model, system.horizon, 0)
res = solve_optbid(
    view, system, 0, 0, StageState(np.zeros(0), np.zeros((0, 1))),
    scenarios, FutureValueFunction(BENEFIT), grid, spots,
    np.full(4, 0.25), agent_id="a",
)
print("\noptimal quantities per box:", res.quantities[0])
print("expected profit:", res.objective)
print("resulting offer curve:", res.bids[0].segments)
