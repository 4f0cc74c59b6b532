"""Price taker vs price maker: the same water, two revenue models.

A hydro plant with 10 MWh of water faces a 10/MWh stage followed by a
100/MWh stage. As a price taker it sells everything in the expensive stage.
As a price maker its sales depress the price it receives — revenue follows
the concave hull of the residual-demand sawtooth instead of a straight line
through the spot — so the optimal quantity stops where the hull's slope dies.
"""

import numpy as np

from hydromarket.clearing import concave_hull, sawtooth_revenue
from hydromarket.inflow import generate_scenarios
from hydromarket.markov import build_markov_chain
from hydromarket.policy import MaxRevPolicy, NashBidPolicy, run_policy
from hydromarket.sddp import SddpConfig
from hydromarket.system import agent_partition, system_from_dict

system = system_from_dict({
    "plants": {"hydro": [{
        "id": "h", "production_factor": 1.0, "max_turbine": 10.0,
        "max_storage": 10.0, "max_generation": 10.0, "initial_storage": 10.0,
    }]},
    "agents": [{"id": "a", "kind": "price_taker", "hydro": ["h"]}],
    "horizon": {"stages": 2, "scenarios": 1, "openings": 1,
                "demand": [[10.0], [10.0]]},
    "inflow_model": {"h": {"coefficients": 0.0,
                           "residual": {"type": "constant", "mean": 0.0}}},
})
spots = np.array([[[10.0]], [[100.0]]])
scenarios = generate_scenarios(system.inflow_model, system.horizon, 0)
chain = build_markov_chain(spots, 1, 0)
view, _ = agent_partition(system, "a")
cfg = SddpConfig(seed=0)

taker = run_policy(MaxRevPolicy(system, view, scenarios, chain, spots, cfg), cfg)
print("price taker: delivered per stage",
      taker.delivered[:, 0, 0], "-> revenue", taker.revenue.sum())

# price maker: rivals offer 6 MW at 10 and 6 MW at 100 against 10 MW demand
curves = []
for t in range(2):
    samples = sawtooth_revenue([(10.0, 6.0), (100.0, 6.0)], 10.0, 10.0,
                               deficit_cost=500.0)
    curves.append([[concave_hull(samples)]])
print("\nresidual-demand revenue hull vertices (same both stages):")
print(np.round(curves[0][0][0].vertices, 2))

maker = run_policy(NashBidPolicy(system, view, scenarios, chain, curves, cfg), cfg)
print("price maker: delivered per stage",
      np.round(maker.delivered[:, 0, 0], 3), "-> revenue",
      round(float(maker.revenue.sum()), 2))
print("withholding below the sawtooth tip keeps the 100-price segment "
      "marginal instead of crashing the price")
