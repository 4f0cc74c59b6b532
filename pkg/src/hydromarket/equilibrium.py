"""Agent-by-agent best-response iteration to an operational Nash equilibrium.

Pipeline: centralized dispatch seeds spot scenarios; a Markov chain is fitted
once and its cluster structure frozen; every agent then alternates between a
revenue recursion (price takers against the current spots, price makers
against concave-hull residual-demand revenues), bid conversion, and market
re-clearing. The loop stops when one full round changes no agent's bid curve
beyond tolerance.
"""

from __future__ import annotations

import csv
import gc
from dataclasses import dataclass, field

import numpy as np

from .clearing import Bid, clear, concave_hull, sawtooth_revenue
from .dispatch import default_deficit_cost, run_centralized
from .inflow import generate_scenarios
from .markov import build_markov_chain
from .optbid import AT_SPOT, PIPELINE_TIEBREAKS, default_grid, solve_optbid
from .policy import MaxRevPolicy, NashBidPolicy, run_policy
from .sddp import SddpConfig
from .stagelp import renewable_block_generation
from .system import PRICE_MAKER, agent_partition


@dataclass
class EquilibriumConfig:
    num_clusters: int = 3
    seed: int = 0
    max_rounds: int = 10
    damping: float = 0.5         # weight on the new best response per update;
                                 # 1.0 applies it fully, smaller values relax
                                 # the step to break best-response cycling
    tol_bid_rel: float = 1e-3    # bid-curve L-inf tolerance, x peak demand
    tol_spot: float = 1e-2       # stage-mean spot L-inf tolerance
    deficit_cost: float | None = None
    grid_size: int = 8
    dispatch_sddp: SddpConfig = field(default_factory=lambda: SddpConfig(max_iterations=30))
    policy_sddp: SddpConfig = field(default_factory=lambda: SddpConfig(max_iterations=8))
    settlement: str = AT_SPOT
    tie_breaks: object = PIPELINE_TIEBREAKS


@dataclass
class RoundTrace:
    round: int
    agent: str
    bid_change: float
    spot_change: float
    stage_mean_spots: np.ndarray = None  # after this agent's update
    failed: bool = False


@dataclass
class EquilibriumReport:
    converged: bool
    rounds: int
    spots: np.ndarray            # NE spot scenarios (T, B, S)
    cd_spots: np.ndarray         # centralized spot scenarios
    bids: dict                   # agent -> bids[t][b][s]
    accepted: dict               # agent -> (T, B, S) dispatched energy, MW
    revenue_ne: dict             # agent -> expected revenue at the NE
    revenue_cd: dict             # agent -> revenue under centralized dispatch
    trace: list = field(default_factory=list)
    round_spots: list = field(default_factory=list)  # stage-mean spots per round
    cd_result: object = None
    chain: object = None
    scenarios: object = None


def bid_distance(a, b) -> float:
    """L-inf distance between two offer curves, compared as cumulative
    quantity offered at-or-below each price."""
    prices = sorted({p for p, _ in a.segments} | {p for p, _ in b.segments})
    worst = 0.0
    for p in prices:
        ca = sum(q for pp, q in a.segments if pp <= p)
        cb = sum(q for pp, q in b.segments if pp <= p)
        worst = max(worst, abs(ca - cb))
    return worst


class _Market:
    def __init__(self, system, config: EquilibriumConfig):
        self.system = system
        self.cfg = config
        self.hz = system.horizon
        self.deficit_cost = (
            default_deficit_cost(system)
            if config.deficit_cost is None
            else config.deficit_cost
        )
        self.scenarios = generate_scenarios(
            system.inflow_model, system.horizon, config.seed
        )
        self.bids = {}
        self.spots = None
        self.accepted = {}
        self.grids = None  # frozen per-stage box-price grids

    # -- clearing over the whole scenario fan ------------------------------

    def clear_all(self):
        hz = self.hz
        T, B, S = hz.stages, hz.blocks, hz.scenarios
        agents = sorted(self.bids)
        spots = np.zeros((T, B, S))
        accepted = {a: np.zeros((T, B, S)) for a in agents}
        for t in range(T):
            for b in range(B):
                for s in range(S):
                    blist = [self.bids[a][t][b][s] for a in agents]
                    out = clear(blist, hz.demand[t, b], self.deficit_cost)
                    spots[t, b, s] = out.price
                    pos = 0
                    for a, bid in zip(agents, blist):
                        n = len(bid.segments)
                        accepted[a][t, b, s] = out.accepted[pos:pos + n].sum()
                        pos += n
        self.spots = spots
        self.accepted = accepted
        return spots

    # -- per-agent candidate spot scenarios --------------------------------

    def _stage_centroids(self, chain, t):
        """Per-block mean of the current spots within each stage-t cluster."""
        K = chain.stages[t].num_clusters
        cent = np.zeros((self.hz.blocks, K))
        for k in range(K):
            members = chain.scenario_set(t, k)
            cent[:, k] = self.spots[t, :, members].mean(axis=0)
        return cent

    def _cluster_probs(self, chain, t, s):
        if t == 0:
            assign = chain.stages[0].assignment
            K = chain.stages[0].num_clusters
            return np.bincount(assign, minlength=K) / len(assign)
        return chain.transitions[t - 1][chain.cluster_of(t - 1, s)]

    def make_bids(self, agent, view, policy, result, chain):
        """Convert a policy's value functions and states into bids.

        Price takers offer thermal capacity directly at variable cost (the
        dominant strategy for stateless plants); only their hydro and
        renewable assets go through the bid-conversion LP. Price makers run
        everything through the LP so withholding stays available to them.
        """
        from .system import AgentView

        hz = self.hz
        T, B, S = hz.stages, hz.blocks, hz.scenarios
        cost_segments = ()
        if agent.kind != PRICE_MAKER and view.thermals:
            cost_segments = tuple(
                (p.cost, p.capacity)
                for p in sorted(view.thermals, key=lambda p: p.cost)
            )
            view = AgentView((), view.hydros, view.renewables)
        has_state = bool(view.hydros or view.renewables or
                         agent.kind == PRICE_MAKER and view.thermals)
        bids = [[[None] * S for _ in range(B)] for _ in range(T)]
        for t in range(T):
            grid = self.grids[t]
            cent = self._stage_centroids(chain, t)
            for s in range(S):
                if has_state:
                    probs = self._cluster_probs(chain, t, s)
                    labels = [policy._labels[t][k] for k in range(len(probs))]
                    res = solve_optbid(
                        view, self.system, t, s, result.states[t][s],
                        self.scenarios, result.fvf, grid, cent, probs,
                        opening_labels_per_k=labels,
                        settlement=self.cfg.settlement,
                        tie_breaks=self.cfg.tie_breaks,
                        agent_id=agent.id,
                    )
                    converted = res.bids
                else:
                    converted = [Bid(agent.id, t, s, b, ()) for b in range(B)]
                for b in range(B):
                    bid = converted[b]
                    if cost_segments:
                        segs = tuple(sorted(bid.segments + cost_segments))
                        bid = Bid(bid.agent_id, bid.stage, bid.scenario,
                                  bid.block, segs)
                    bids[t][b][s] = bid
        return bids

    # -- best responses ----------------------------------------------------

    def taker_response(self, agent, chain):
        view, _ = agent_partition(self.system, agent.id)
        pol = MaxRevPolicy(
            self.system, view, self.scenarios, chain, self.spots, self.cfg.policy_sddp
        )
        result = run_policy(pol, self.cfg.policy_sddp)
        return self.make_bids(agent, view, pol, result, chain)

    def maker_response(self, agent, chain):
        view, _ = agent_partition(self.system, agent.id)
        hz = self.hz
        T, B, S = hz.stages, hz.blocks, hz.scenarios
        rivals = [a for a in self.bids if a != agent.id]
        curves = [[[None] * S for _ in range(B)] for _ in range(T)]
        for t in range(T):
            for b in range(B):
                for s in range(S):
                    others = [self.bids[a][t][b][s] for a in rivals]
                    renew = renewable_block_generation(view, self.system, t, s)
                    e_max = (
                        sum(p.capacity for p in view.thermals)
                        + sum(h.max_generation for h in view.hydros)
                        + renew[b]
                    )
                    samples = sawtooth_revenue(
                        others, hz.demand[t, b], e_max, self.deficit_cost
                    )
                    curves[t][b][s] = concave_hull(samples)
        pol = NashBidPolicy(
            self.system, view, self.scenarios, chain, curves, self.cfg.policy_sddp
        )
        result = run_policy(pol, self.cfg.policy_sddp)
        return self.make_bids(agent, view, pol, result, chain)


def mix_bid(prev: Bid, new: Bid, step: float) -> Bid:
    """Relaxed update ``prev + step * (new - prev)`` on offer curves: quantity
    at each price is the convex mix of the two curves' quantities there."""
    if step >= 1.0:
        return new
    qs: dict = {}
    for p, q in prev.segments:
        qs[p] = qs.get(p, 0.0) + (1.0 - step) * q
    for p, q in new.segments:
        qs[p] = qs.get(p, 0.0) + step * q
    segs = tuple((p, q) for p, q in sorted(qs.items()) if q > 1e-12)
    return Bid(new.agent_id, new.stage, new.scenario, new.block, segs)


def _bid_profile_distance(old, new, stages, blocks, scenarios):
    worst = 0.0
    for t in range(stages):
        for b in range(blocks):
            for s in range(scenarios):
                worst = max(worst, bid_distance(old[t][b][s], new[t][b][s]))
    return worst


def run_equilibrium(system, config: EquilibriumConfig | None = None) -> EquilibriumReport:
    cfg = config or EquilibriumConfig()
    mkt = _Market(system, cfg)
    hz = system.horizon
    T, B, S = hz.stages, hz.blocks, hz.scenarios

    # 1) centralized dispatch seeds the price process
    cd, _ = run_centralized(system, mkt.scenarios, cfg.dispatch_sddp, mkt.deficit_cost)
    chain = build_markov_chain(
        cd.spot, cfg.num_clusters, cfg.seed, hz.block_weights
    )

    # 2) all agents start as price takers against the centralized spots; the
    # box-price grids are frozen here so later rounds bid on a fixed menu
    mkt.spots = cd.spot.copy()
    # thermal costs join the menu so price makers can place quantity exactly
    # at the steps that set prices once bidding turns strategic
    costs = [p.cost for p in system.thermals]
    mkt.grids = [
        default_grid(cd.spot[t], mkt.deficit_cost, cfg.grid_size, extra=costs)
        for t in range(T)
    ]
    agents = sorted(system.agents, key=lambda a: a.id)
    for agent in agents:
        mkt.bids[agent.id] = mkt.taker_response(agent, chain)
        gc.collect()  # subproblem<->policy cycles pin native solver memory
    mkt.clear_all()

    trace = []
    round_spots = [mkt.spots.mean(axis=(1, 2)).copy()]
    tol_bid = cfg.tol_bid_rel * float(hz.demand.max())
    converged = False
    rounds_done = 0
    for rnd in range(1, cfg.max_rounds + 1):
        round_change = 0.0
        spots_before = mkt.spots.copy()
        for agent in agents:
            prev = mkt.bids[agent.id]
            failed = False
            try:
                if agent.kind == PRICE_MAKER:
                    new = mkt.maker_response(agent, chain)
                else:
                    new = mkt.taker_response(agent, chain)
            except Exception:
                new, failed = prev, True
            gc.collect()  # subproblem<->policy cycles pin native solver memory
            # convergence is judged on the undamped best response (the
            # optimality gap); the applied update is the relaxed step
            change = _bid_profile_distance(prev, new, T, B, S)
            if not failed and cfg.damping < 1.0:
                new = [
                    [
                        [mix_bid(prev[t][b][s], new[t][b][s], cfg.damping)
                         for s in range(S)]
                        for b in range(B)
                    ]
                    for t in range(T)
                ]
            mkt.bids[agent.id] = new
            old_spots = mkt.spots.copy()
            mkt.clear_all()
            spot_change = float(np.abs(mkt.spots - old_spots).max())
            trace.append(RoundTrace(
                rnd, agent.id, change, spot_change,
                mkt.spots.mean(axis=(1, 2)).copy(), failed,
            ))
            round_change = max(round_change, change)
        rounds_done = rnd
        round_spots.append(mkt.spots.mean(axis=(1, 2)).copy())
        stage_mean_change = float(
            np.abs(round_spots[-1] - round_spots[-2]).max()
        )
        if round_change <= tol_bid and stage_mean_change <= cfg.tol_spot:
            converged = True
            break

    # 3) revenue accounting (expected over scenarios, duration-weighted)
    w = hz.block_weights
    revenue_ne, revenue_cd = {}, {}
    for agent in agents:
        acc = mkt.accepted[agent.id]
        revenue_ne[agent.id] = float(
            np.einsum("tbs,tbs,b->", mkt.spots, acc, w) / S
        )
        view, _ = agent_partition(system, agent.id)
        own = np.zeros((T, B, S))
        tpos = {p.id: j for j, p in enumerate(system.thermals)}
        hpos = {h.id: j for j, h in enumerate(system.hydros)}
        for p in view.thermals:
            own += cd.thermal_gen[:, :, :, tpos[p.id]]
        for h in view.hydros:
            own += cd.hydro_gen[:, :, :, hpos[h.id]]
        for r in view.renewables:
            for t in range(T):
                for b in range(B):
                    for s in range(S):
                        own[t, b, s] += system.renewable_generation(r.id, t, b, s)
        revenue_cd[agent.id] = float(np.einsum("tbs,tbs,b->", cd.spot, own, w) / S)

    return EquilibriumReport(
        converged=converged,
        rounds=rounds_done,
        spots=mkt.spots,
        cd_spots=cd.spot,
        bids=mkt.bids,
        accepted=mkt.accepted,
        revenue_ne=revenue_ne,
        revenue_cd=revenue_cd,
        trace=trace,
        round_spots=round_spots,
        cd_result=cd,
        chain=chain,
        scenarios=mkt.scenarios,
    )


# -- report files ----------------------------------------------------------


def write_convergence_csv(report: EquilibriumReport, path):
    """Shifted-series diagnostic: one row per agent update carrying the full
    stage-mean spot series at that point, so consecutive rows show the series
    drifting until it stabilizes."""
    T = report.spots.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["round", "agent", "bid_change", "spot_change"]
            + [f"mean_spot_stage_{t}" for t in range(T)]
        )
        for tr in report.trace:
            w.writerow(
                [tr.round, tr.agent, repr(tr.bid_change), repr(tr.spot_change)]
                + [repr(float(x)) for x in tr.stage_mean_spots]
            )


def write_spot_comparison_csv(report: EquilibriumReport, path):
    T, B, S = report.spots.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "block", "scenario", "cd_spot", "ne_spot"])
        for t in range(T):
            for b in range(B):
                for s in range(S):
                    w.writerow(
                        [t, b, s, repr(float(report.cd_spots[t, b, s])), repr(float(report.spots[t, b, s]))]
                    )


def write_revenue_csv(report: EquilibriumReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "cd_revenue", "ne_revenue"])
        for aid in sorted(report.revenue_ne):
            w.writerow([aid, repr(report.revenue_cd[aid]), repr(report.revenue_ne[aid])])
