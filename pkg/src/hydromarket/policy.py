"""Agent revenue-maximization recursions over a spot-price Markov chain.

MaxRev: price taker. Each stage subproblem maximizes spot revenue at the
scenario's realized prices minus thermal cost plus the expected future
benefit over openings, with cut pools segmented by the Markov cluster of the
generating scenario.

NashBid: price maker. Identical machinery except revenue comes from the
concave-hull revenue curve of the residual market, so the agent's own
quantity moves the price it is paid.

Both produce a Future Benefit Function (min-of-cuts upper approximation) and
per-scenario forward state trajectories; OptBid consumes these to build bid
curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp as lpm
from .sddp import BENEFIT, SddpConfig, SddpRunner, StageState, opening_stage_states
from .stagelp import StageSkeleton, renewable_block_generation


@dataclass
class PolicyResult:
    fvf: object                  # FutureValueFunction, benefit sense
    states: list                 # states[t][s] entering each stage
    revenue: np.ndarray          # (stages, scenarios) immediate net revenue
    delivered: np.ndarray        # (stages, blocks, scenarios) own energy, MW
    report: object = None


class _AgentStageProblem:
    def __init__(self, policy, t, s, sk, etot_vars, renew_revenue):
        self.policy = policy
        self.t = t
        self.s = s
        self.sk = sk
        self.etot = etot_vars
        self.renew_revenue = renew_revenue  # constant, kept out of the LP

    def solve(self):
        return self.sk.lp.solve()

    def immediate(self, sol):
        return sol.objective - self.sk.fvf_term(sol)

    def cut(self, sol, state, stage, cluster=None):
        return self.sk.cut(sol, state, stage, cluster)

    def record(self, sol):
        return {
            "t": self.t,
            "s": self.s,
            "delivered": sol.primal[self.etot] if self.etot else np.zeros(0),
            "revenue": self.immediate(sol) + self.renew_revenue,
            "v": self.sk.end_storage(sol),
        }


class _AgentPolicyBase:
    """Common plumbing: Markov labels, state transitions, skeleton assembly."""

    sense = BENEFIT

    def __init__(self, system, view, scenarios, chain, config: SddpConfig):
        self.system = system
        self.view = view
        self.scenarios = scenarios
        self.chain = chain
        self.stages = system.horizon.stages
        self.num_scenarios = system.horizon.scenarios
        self._labels = self._draw_opening_labels(config.seed)
        self._hpos = {h.id: i for i, h in enumerate(view.hydros)}
        self._cache = {}

    def build(self, t, s, state, fvf):
        """Cached stage subproblem: reuse the LP (and its warm-started
        solver), re-pointing only what changes between visits — the incoming
        state, newly pooled cuts, and whatever ``_rebind`` refreshes."""
        key = self._cache_key(t, s)
        prob = self._cache.get(key)
        if prob is None:
            prob = self._build(t, s, state, fvf)
            self._cache[key] = prob
            return prob
        prob.s = s
        prob.sk.set_state(state)
        prob.sk.sync_cuts()
        self._rebind(prob, t, s)
        return prob

    def _cache_key(self, t, s):
        return (t, s)

    def _rebind(self, prob, t, s):
        pass

    def release(self):
        """Drop cached subproblems (and their native solver instances)."""
        self._cache.clear()

    def _draw_opening_labels(self, seed):
        """labels[t][k]: next-stage cluster per opening of the stage-t
        subproblem when the current scenario sits in cluster k."""
        from .markov import assign_openings

        L = self.scenarios.num_openings
        labels = []
        for t in range(self.stages):
            P = self.chain.transitions[t]
            labels.append(
                [assign_openings(P[k], L, seed + 104729 * t + 31 * k)
                 for k in range(P.shape[0])]
            )
        return labels

    def cluster_of(self, t, s):
        return self.chain.cluster_of(t, s)

    def initial_state(self, s) -> StageState:
        storage = np.array([h.initial_storage for h in self.view.hydros])
        lag = self._view_lag(0, s)
        return StageState(storage, lag)

    def _view_lag(self, t, s):
        full = self.scenarios.lag_window(self.system.inflow_model, t, s)
        idx = [self.system.inflow_model.hydro_ids.index(h.id) for h in self.view.hydros]
        return full[idx] if idx else np.zeros((0, full.shape[1]))

    def next_state(self, t, s, prob, sol) -> StageState:
        tn = min(t + 1, self.stages - 1)
        return StageState(prob.sk.end_storage(sol), self._view_lag(tn, s))

    def backward_states(self, t, s, state, prev):
        """Branch the backward state over every stage-t opening residual."""
        model = self.system.inflow_model
        ids = [h.id for h in self.view.hydros]
        idx = [model.hydro_ids.index(hid) for hid in ids]
        openings = (
            self.scenarios.openings[t][idx]
            if idx
            else np.zeros((0, self.scenarios.num_openings))
        )
        return opening_stage_states(model, ids, openings, t, state, prev.lag_window)

    def _skeleton(self, lp, t, state, fvf, cluster):
        hz = self.system.horizon
        idx = [self.system.inflow_model.hydro_ids.index(h.id) for h in self.view.hydros]
        openings = self.scenarios.openings[t + 1][idx] if idx else np.zeros(
            (0, self.scenarios.num_openings)
        )
        return StageSkeleton(
            lp,
            self.view,
            _ViewInflowModel(self.system.inflow_model, self.view),
            t,
            state,
            openings,
            fvf,
            hz.blocks,
            hz.block_weights,
            opening_labels=self._labels[t][cluster],
        )

    def _delivered_vars(self, lp, sk, t, s):
        """Etot[b] = own thermal + hydro + renewable output per block."""
        hz = self.system.horizon
        renew = renewable_block_generation(self.view, self.system, t, s)
        etot = []
        for b in range(hz.blocks):
            cap = (
                sum(p.capacity for p in self.view.thermals)
                + sum(h.max_generation for h in self.view.hydros)
                + renew[b]
            )
            var = lp.add_var(f"etot[{b}]", 0.0, cap)
            terms = [(var, 1.0)]
            terms += [(row[b], -1.0) for row in sk.e]
            terms += [(row[b], -1.0) for row in sk.g]
            lp.add_constr(f"etot_def[{b}]", terms, "==", renew[b])
            etot.append(var)
        return etot, renew


class _ViewInflowModel:
    """InflowModel facade restricted to one agent's hydros."""

    def __init__(self, model, view):
        self._model = model
        self.stages = model.stages
        self.max_lag = model.max_lag
        self.hydro_ids = tuple(h.id for h in view.hydros)

    def coeffs_for(self, hydro_id, t):
        return self._model.coeffs_for(hydro_id, t)

    def spec(self, hydro_id):
        return self._model.spec(hydro_id)


class MaxRevPolicy(_AgentPolicyBase):
    """Price taker: revenue is linear at the scenario's spot prices."""

    def __init__(self, system, view, scenarios, chain, spots, config):
        super().__init__(system, view, scenarios, chain, config)
        self.spots = np.asarray(spots, dtype=float)  # (T, B, S)

    def _cache_key(self, t, s):
        # the LP structure only depends on the Markov cluster (cut labels);
        # prices, renewables and state re-bind per scenario visit
        return (t, self.cluster_of(t, s))

    def _rebind(self, prob, t, s):
        hz = self.system.horizon
        lp = prob.sk.lp
        renew = renewable_block_generation(self.view, self.system, t, s)
        static_cap = sum(p.capacity for p in self.view.thermals) + sum(
            h.max_generation for h in self.view.hydros
        )
        for b in range(hz.blocks):
            lp.set_var_bounds(prob.etot[b], 0.0, static_cap + renew[b])
            lp.set_rhs(f"etot_def[{b}]", renew[b])
            lp.set_obj(prob.etot[b], self.spots[t, b, s] * hz.block_weights[b])

    def _build(self, t, s, state, fvf):
        hz = self.system.horizon
        lp = lpm.LinearProgram("max")
        sk = self._skeleton(lp, t, state, fvf, self.cluster_of(t, s))
        etot, renew = self._delivered_vars(lp, sk, t, s)
        for b in range(hz.blocks):
            # renewables are inside etot, so their revenue is priced here too
            lp.add_obj(etot[b], self.spots[t, b, s] * hz.block_weights[b])
        return _AgentStageProblem(self, t, s, sk, etot, 0.0)


class NashBidPolicy(_AgentPolicyBase):
    """Price maker: revenue read off concave residual-demand revenue curves.

    ``curves[t][b][s]`` is a RevenueCurve; the LP takes revenue as a variable
    bounded above by every facet, which is exact for concave curves under
    maximization.
    """

    def __init__(self, system, view, scenarios, chain, curves, config):
        super().__init__(system, view, scenarios, chain, config)
        self.curves = curves

    def _build(self, t, s, state, fvf):
        hz = self.system.horizon
        lp = lpm.LinearProgram("max")
        sk = self._skeleton(lp, t, state, fvf, self.cluster_of(t, s))
        etot, renew = self._delivered_vars(lp, sk, t, s)
        for b in range(hz.blocks):
            curve = self.curves[t][b][s]
            rev = lp.add_var(f"rev[{b}]", None, None, obj=hz.block_weights[b])
            facets = curve.facets()
            if not facets:
                lp.add_constr(f"rev_zero[{b}]", [(rev, 1.0)], "==",
                              float(curve.vertices[-1, 1]))
            else:
                for m, (slope, intercept) in enumerate(facets):
                    lp.add_constr(
                        f"rev_facet[{b},{m}]",
                        [(rev, 1.0), (etot[b], -slope)],
                        "<=",
                        intercept,
                    )
            # the curve is only sampled up to its own abscissa range
            lp.add_constr(f"rev_cap[{b}]", [(etot[b], 1.0)], "<=", curve.e_max)
        return _AgentStageProblem(self, t, s, sk, etot, 0.0)


def run_policy(policy, config: SddpConfig | None = None) -> PolicyResult:
    """Run the benefit recursion to (statistical) convergence and simulate."""
    runner = SddpRunner(policy, config)
    report = runner.run()
    final = runner.forward_pass(record=True)
    policy.release()  # cached LPs (native solver memory) are no longer needed
    hz = policy.system.horizon
    T, B, S = hz.stages, hz.blocks, hz.scenarios
    revenue = np.zeros((T, S))
    delivered = np.zeros((T, B, S))
    for rec in final.records:
        revenue[rec["t"], rec["s"]] = rec["revenue"]
        delivered[rec["t"], :, rec["s"]] = rec["delivered"]
    return PolicyResult(runner.fvf, final.states, revenue, delivered, report)
