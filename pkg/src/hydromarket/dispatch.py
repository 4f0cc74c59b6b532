"""Centralized cost-based dispatch: SDDP over the whole system plus a final
simulation that records spot prices (load-balance duals) and water values.

The spot prices produced here are the first proxy used to seed the market
equilibrium pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp as lpm
from .sddp import COST, SddpConfig, SddpRunner, StageState, opening_stage_states
from .stagelp import StageSkeleton, renewable_block_generation
from .system import system_view


def default_deficit_cost(system) -> float:
    return 10.0 * system.max_thermal_cost()


@dataclass
class DispatchResult:
    spot: np.ndarray          # (stages, blocks, scenarios), currency/MWh
    thermal_gen: np.ndarray   # (stages, blocks, scenarios, num_thermals), MW
    hydro_gen: np.ndarray     # (stages, blocks, scenarios, num_hydros), MW
    turbined: np.ndarray      # (stages, scenarios, num_hydros), hm3
    spilled: np.ndarray       # (stages, scenarios, num_hydros), hm3
    storage: np.ndarray       # (stages, scenarios, num_hydros), end-of-stage hm3
    deficit: np.ndarray       # (stages, blocks, scenarios), MW
    water_value: np.ndarray   # (stages, scenarios, num_hydros), currency/hm3
    immediate_cost: np.ndarray  # (stages, scenarios)
    report: object = None


class _StageProblem:
    def __init__(self, policy, t, s, skeleton, deficit_vars):
        self.policy = policy
        self.t = t
        self.s = s
        self.sk = skeleton
        self.deficit_vars = deficit_vars

    def solve(self):
        return self.sk.lp.solve()

    def immediate(self, sol):
        return sol.objective - self.sk.fvf_term(sol)

    def cut(self, sol, state, stage, cluster=None):
        return self.sk.cut(sol, state, stage, cluster)

    def record(self, sol):
        sk, t, s = self.sk, self.t, self.s
        weights = self.policy.system.horizon.block_weights
        blocks = self.policy.system.horizon.blocks
        demand = self.policy.system.horizon.demand[t]
        # zero demand leaves the balance dual degenerate; report spot 0 to
        # match the market-clearing convention for an empty market
        spot = np.array(
            [
                sol.dual(f"load_balance[{b}]") / weights[b] if demand[b] > 0 else 0.0
                for b in range(blocks)
            ]
        )
        return {
            "t": t,
            "s": s,
            "spot": spot,
            "g": np.array([[sol.primal[gb] for gb in row] for row in sk.g]),
            "e": np.array([[sol.primal[eb] for eb in row] for row in sk.e]),
            "u": sol.primal[sk.u] if sk.u else np.zeros(0),
            "x": sol.primal[sk.x] if sk.x else np.zeros(0),
            "v": sk.end_storage(sol),
            "deficit": sol.primal[self.deficit_vars],
            "water_value": sk.water_values(sol),
            "immediate": self.immediate(sol),
        }


class CentralizedPolicy:
    """Stage policy for the cost-minimizing system operator."""

    sense = COST

    def __init__(self, system, scenarios, deficit_cost=None):
        self.system = system
        self.scenarios = scenarios
        self.view = system_view(system)
        self.deficit_cost = (
            default_deficit_cost(system) if deficit_cost is None else float(deficit_cost)
        )
        self.stages = system.horizon.stages
        self.num_scenarios = system.horizon.scenarios
        self._cache = {}

    def initial_state(self, s) -> StageState:
        storage = np.array([h.initial_storage for h in self.view.hydros])
        lag = self.scenarios.lag_window(self.system.inflow_model, 0, s)
        return StageState(storage, lag)

    def cluster_of(self, t, s):
        return None

    def opening_labels(self, t, s):
        return None

    def backward_states(self, t, s, state, prev):
        """Branch the backward state over every stage-t opening residual."""
        model = self.system.inflow_model
        return opening_stage_states(
            model, model.hydro_ids, self.scenarios.openings[t], t, state,
            prev.lag_window,
        )

    def build(self, t, s, state, fvf):
        """Cached stage subproblem (one per stage): between visits only the
        incoming state, the scenario's net demand and the cut pool change."""
        prob = self._cache.get(t)
        if prob is None:
            prob = self._build(t, s, state, fvf)
            self._cache[t] = prob
            return prob
        prob.s = s
        prob.sk.set_state(state)
        prob.sk.sync_cuts()
        hz = self.system.horizon
        renew = renewable_block_generation(self.view, self.system, t, s)
        for b in range(hz.blocks):
            prob.sk.lp.set_rhs(f"load_balance[{b}]", hz.demand[t, b] - renew[b])
        return prob

    def release(self):
        """Drop cached subproblems (and their native solver instances)."""
        self._cache.clear()

    def _build(self, t, s, state, fvf):
        system = self.system
        hz = system.horizon
        lp = lpm.LinearProgram("min")
        sk = StageSkeleton(
            lp,
            self.view,
            system.inflow_model,
            t,
            state,
            self.scenarios.openings[t + 1],
            fvf,
            hz.blocks,
            hz.block_weights,
        )
        renew = renewable_block_generation(self.view, system, t, s)
        deficit_vars = []
        for b in range(hz.blocks):
            dv = lp.add_var(
                f"deficit[{b}]", 0.0, None, obj=self.deficit_cost * hz.block_weights[b]
            )
            deficit_vars.append(dv)
            terms = [(row[b], 1.0) for row in sk.e] + [(row[b], 1.0) for row in sk.g]
            terms.append((dv, 1.0))
            lp.add_constr(
                f"load_balance[{b}]", terms, "==", hz.demand[t, b] - renew[b]
            )
        return _StageProblem(self, t, s, sk, deficit_vars)

    def next_state(self, t, s, prob, sol) -> StageState:
        storage = prob.sk.end_storage(sol)
        tn = min(t + 1, self.stages - 1)
        lag = self.scenarios.lag_window(self.system.inflow_model, tn, s)
        return StageState(storage, lag)


def run_centralized(system, scenarios, config: SddpConfig | None = None, deficit_cost=None):
    """SDDP to convergence, then one forward simulation recording all duals.

    Returns (DispatchResult, FutureValueFunction).
    """
    policy = CentralizedPolicy(system, scenarios, deficit_cost)
    runner = SddpRunner(policy, config)
    report = runner.run()
    final = runner.forward_pass(record=True)
    policy.release()  # cached LPs (native solver memory) are no longer needed

    hz = system.horizon
    T, B, S = hz.stages, hz.blocks, hz.scenarios
    nG, nH = len(system.thermals), len(system.hydros)
    result = DispatchResult(
        spot=np.zeros((T, B, S)),
        thermal_gen=np.zeros((T, B, S, nG)),
        hydro_gen=np.zeros((T, B, S, nH)),
        turbined=np.zeros((T, S, nH)),
        spilled=np.zeros((T, S, nH)),
        storage=np.zeros((T, S, nH)),
        deficit=np.zeros((T, B, S)),
        water_value=np.zeros((T, S, nH)),
        immediate_cost=np.zeros((T, S)),
        report=report,
    )
    for rec in final.records:
        t, s = rec["t"], rec["s"]
        result.spot[t, :, s] = rec["spot"]
        if nG:
            result.thermal_gen[t, :, s, :] = rec["g"].T
        if nH:
            result.hydro_gen[t, :, s, :] = rec["e"].T
            result.turbined[t, s, :] = rec["u"]
            result.spilled[t, s, :] = rec["x"]
            result.storage[t, s, :] = rec["v"]
            result.water_value[t, s, :] = rec["water_value"]
        result.deficit[t, :, s] = rec["deficit"]
        result.immediate_cost[t, s] = rec["immediate"]
    return result, runner.fvf
