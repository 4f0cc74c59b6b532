"""Shared multi-stage machinery: cut pools, forward/backward passes and the
statistical stopping rule.

Stage subproblems are supplied by a policy object (centralized dispatch,
price-taker revenue maximization, price-maker revenue maximization); the
runner only sees the common contract: build an LP for (stage, scenario,
state), extract a cut from its duals, and report the expected future-value
term so immediate costs can be separated.

Cut state is (end-of-stage storage, inflow lag window). Slopes are read off
the duals of the state-fixing constraints, so the extraction is exact for any
lag structure; tests validate it by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COST = "cost"       # minimization, cuts lower-bound (max over cuts)
BENEFIT = "benefit"  # maximization, cuts upper-bound (min over cuts)


class SddpError(Exception):
    pass


@dataclass(frozen=True)
class Cut:
    stage: int
    intercept: float
    storage_coeffs: np.ndarray  # (num_hydros,)
    inflow_coeffs: np.ndarray   # (num_hydros, max_lag)
    cluster: int | None = None

    def value(self, storage, lag_window) -> float:
        return (
            self.intercept
            + float(self.storage_coeffs @ np.asarray(storage))
            + float(np.sum(self.inflow_coeffs * np.asarray(lag_window)))
        )


class FutureValueFunction:
    """Per-stage cut pools; ``pools[t]`` approximates the value-to-go of stage
    t and is referenced by stage t-1 subproblems. Cost pools evaluate as the
    max over cuts, benefit pools as the min; an empty pool evaluates to 0."""

    def __init__(self, sense=COST):
        if sense not in (COST, BENEFIT):
            raise SddpError(f"unknown sense {sense!r}")
        self.sense = sense
        self.pools: dict[int, list[Cut]] = {}

    def add(self, cut: Cut):
        self.pools.setdefault(cut.stage, []).append(cut)

    def cuts_for(self, t, cluster=None) -> list[Cut]:
        pool = self.pools.get(t, [])
        if cluster is None:
            return pool
        return [c for c in pool if c.cluster is None or c.cluster == cluster]

    def evaluate(self, t, storage, lag_window, cluster=None) -> float:
        cuts = self.cuts_for(t, cluster)
        if not cuts:
            return 0.0
        vals = [c.value(storage, lag_window) for c in cuts]
        return max(vals) if self.sense == COST else min(vals)

    def num_cuts(self) -> int:
        return sum(len(p) for p in self.pools.values())

    def export_rows(self):
        """Rows (stage, cluster, intercept, storage coeffs..., inflow coeffs...)."""
        rows = []
        for t in sorted(self.pools):
            for c in self.pools[t]:
                rows.append(
                    [t, "" if c.cluster is None else c.cluster, c.intercept]
                    + list(np.asarray(c.storage_coeffs))
                    + list(np.asarray(c.inflow_coeffs).ravel())
                )
        return rows


@dataclass(frozen=True)
class StageState:
    storage: np.ndarray     # incoming reservoir levels (num_hydros,)
    lag_window: np.ndarray  # (num_hydros, max_lag), most recent first


def opening_stage_states(model, hydro_ids, openings_t, t, state, prev_window):
    """One stage-t state per opening residual, sharing the forward storage.

    The forward pass realizes a single opening per (stage, scenario), but the
    discretized process branches over the whole pool. Re-deriving the stage
    inflow for every opening lets the backward pass cut at each branch, so
    unvisited branches are valued by a tight cut instead of extrapolation.
    """
    from .inflow import ar_step

    if not hydro_ids:
        return [state]
    states = []
    for l in range(openings_t.shape[1]):
        win = np.array(state.lag_window, copy=True)
        for i, hid in enumerate(hydro_ids):
            win[i, 0] = ar_step(model, t, hid, prev_window[i], openings_t[i, l])
        states.append(StageState(state.storage, win))
    return states


@dataclass
class ConvergenceReport:
    lower_bound: float
    upper_bound: float
    std_error: float
    iterations: int
    converged: bool
    bound_anomaly: bool = False


@dataclass
class SddpConfig:
    max_iterations: int = 50
    min_iterations: int = 3
    confidence: float = 0.95
    seed: int = 0


_Z95 = 1.959963984540054


def _z_value(confidence):
    from scipy.stats import norm

    return float(norm.ppf(0.5 + confidence / 2.0))


def check_convergence(history, min_iterations=3, confidence=0.95, sense=COST) -> ConvergenceReport:
    """Stop when the first-stage bound falls inside the confidence interval of
    the simulated immediate-cost average. A zero-variance history degenerates
    to near-equality of the two bounds."""
    if not history:
        raise SddpError("convergence check requires at least one iteration")
    lb, ub, se = history[-1]
    it = len(history)
    z = _Z95 if confidence == 0.95 else _z_value(confidence)
    if se == 0.0:
        inside = abs(ub - lb) <= 1e-6 * (1.0 + abs(ub))
    else:
        inside = (ub - z * se) <= lb <= (ub + z * se)
    if sense == COST:
        anomaly = lb > ub + z * se + 1e-9
    else:
        anomaly = lb < ub - z * se - 1e-9
    return ConvergenceReport(lb, ub, se, it, bool(inside and it >= min_iterations), anomaly)


@dataclass
class ForwardResult:
    states: list                 # states[t][s] -> StageState entering stage t
    immediate: np.ndarray        # (stages, scenarios) immediate cost/revenue
    stage0_objectives: np.ndarray
    records: list = field(default_factory=list)


class SddpRunner:
    """Algorithm skeleton: iterate forward simulation and backward recursion
    until the stopping rule fires or the iteration cap is hit."""

    def __init__(self, policy, config: SddpConfig | None = None):
        self.policy = policy
        self.config = config or SddpConfig()
        self.fvf = FutureValueFunction(policy.sense)
        self.history: list[tuple] = []
        self._cut_keys: set = set()

    # -- passes ------------------------------------------------------------

    def forward_pass(self, record=False) -> ForwardResult:
        T, S = self.policy.stages, self.policy.num_scenarios
        states = [[None] * S for _ in range(T)]
        immediate = np.zeros((T, S))
        stage0 = np.zeros(S)
        records = []
        for s in range(S):
            state = self.policy.initial_state(s)
            for t in range(T):
                states[t][s] = state
                prob = self.policy.build(t, s, state, self.fvf)
                sol = prob.solve()
                if not sol.optimal:
                    raise SddpError(f"stage {t} scenario {s}: subproblem {sol.status}")
                immediate[t, s] = prob.immediate(sol)
                if t == 0:
                    stage0[s] = sol.objective
                if record:
                    records.append(prob.record(sol))
                state = self.policy.next_state(t, s, prob, sol)
        return ForwardResult(states, immediate, stage0, records)

    def backward_pass(self, forward: ForwardResult):
        T, S = self.policy.stages, self.policy.num_scenarios
        branch = getattr(self.policy, "backward_states", None)
        for t in range(T - 1, 0, -1):
            for s in range(S):
                state = forward.states[t][s]
                if branch is None:
                    states = [state]
                else:
                    states = branch(t, s, state, forward.states[t - 1][s])
                for st in states:
                    prob = self.policy.build(t, s, st, self.fvf)
                    sol = prob.solve()
                    if not sol.optimal:
                        raise SddpError(
                            f"backward stage {t} scenario {s}: subproblem {sol.status}"
                        )
                    cut = prob.cut(sol, st, t, cluster=self.policy.cluster_of(t, s))
                    key = (
                        cut.stage,
                        cut.cluster,
                        cut.intercept,
                        cut.storage_coeffs.tobytes(),
                        cut.inflow_coeffs.tobytes(),
                    )
                    # identical (t, s) branches routinely reproduce the same
                    # dual basis; keeping one copy bounds the cut-pool growth
                    if key not in self._cut_keys:
                        self._cut_keys.add(key)
                        self.fvf.add(cut)

    # -- driver ------------------------------------------------------------

    def run(self) -> ConvergenceReport:
        cfg = self.config
        report = None
        for _ in range(cfg.max_iterations):
            fwd = self.forward_pass()
            lb = float(np.mean(fwd.stage0_objectives))
            totals = fwd.immediate.sum(axis=0)
            ub = float(np.mean(totals))
            se = (
                float(np.std(totals, ddof=1) / np.sqrt(len(totals)))
                if len(totals) > 1
                else 0.0
            )
            self.history.append((lb, ub, se))
            report = check_convergence(
                self.history, cfg.min_iterations, cfg.confidence, self.policy.sense
            )
            if report.converged:
                return report
            self.backward_pass(fwd)
        return report
