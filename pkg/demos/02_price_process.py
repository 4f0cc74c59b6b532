"""From dispatch to a spot-price Markov chain.

Centralized dispatch of a stochastic hydrothermal system yields one spot
price per (stage, block, scenario). Clustering the per-stage price vectors
and counting scenario moves between consecutive stages produces the price
process agents later bid against: a small per-stage state space with
transition probabilities.
"""

import numpy as np

from hydromarket.cases import duopoly
from hydromarket.dispatch import run_centralized
from hydromarket.inflow import generate_scenarios
from hydromarket.markov import build_markov_chain
from hydromarket.sddp import SddpConfig

system = duopoly(stages=6, scenarios=12, openings=3)
scenarios = generate_scenarios(system.inflow_model, system.horizon, seed=1)
result, _ = run_centralized(system, scenarios, SddpConfig(seed=1))

print("stage-mean spot prices:",
      np.round(result.spot.mean(axis=(1, 2)), 2))

chain = build_markov_chain(result.spot, K=3, seed=1,
                           weights=system.horizon.block_weights)
for t in (0, 3, 5):
    st = chain.stages[t]
    print(f"\nstage {t}: {st.num_clusters} price states, centroids",
          np.round(st.centroids.ravel(), 2))
    print("  members per state:",
          [len(st.members(k)) for k in range(st.num_clusters)])
    print("  transition row(s) to the next stage:")
    for row in chain.transitions[t]:
        print("   ", np.round(row, 3))
