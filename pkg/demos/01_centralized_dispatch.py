"""Why stored water has a price: two-stage dispatch with a shared reservoir.

A 20 MWh reservoir faces two identical stages of 20 MW demand, backed by a
cheap 10 MW plant (50/MWh) and an expensive 15 MW plant (200/MWh). Burning
all the water in stage one looks free but forces the 200-cost plant to run
tomorrow; the converged policy splits the water 10/10 and never starts the
expensive unit.
"""

from hydromarket.cases import toy_two_stage
from hydromarket.dispatch import run_centralized
from hydromarket.inflow import generate_scenarios
from hydromarket.sddp import SddpConfig

system = toy_two_stage()
scenarios = generate_scenarios(system.inflow_model, system.horizon, seed=0)
result, fvf = run_centralized(system, scenarios, SddpConfig(seed=0))

print("converged:", result.report.converged,
      "after", result.report.iterations, "iterations")
print(f"total expected cost: {result.report.lower_bound:.1f} "
      "(myopic dispatch would pay 2500.0)")
for t in range(2):
    print(f"stage {t}: hydro {result.hydro_gen[t, 0, 0, 0]:5.1f} MW, "
          f"cheap thermal {result.thermal_gen[t, 0, 0, 0]:5.1f} MW, "
          f"dear thermal {result.thermal_gen[t, 0, 0, 1]:5.1f} MW, "
          f"end storage {result.storage[t, 0, 0]:5.1f} hm3, "
          f"spot {result.spot[t, 0, 0]:6.1f}, "
          f"water value {result.water_value[t, 0, 0]:6.1f}")
print("\nthe future-cost function holds", fvf.num_cuts(), "cuts; the stage-1",
      "pool prices water at the displaced 200-cost generation when empty")
