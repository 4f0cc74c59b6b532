"""Conversion of a future benefit function into price/quantity box bids.

The agent fixes a price grid ("boxes") before the stage's spot realizes.
Quantities q[b, n] per block and box are first-stage decisions shared across
spot scenarios; everything physical (dispatch, storage, future value) is
per-scenario recourse. A box is accepted in scenario k when its price does
not exceed the scenario spot, so expected profit is an LP in q.

Settlement is as-bid by default (each accepted box is paid its own price).
The equilibrium loop instead settles at the spot and adds tiny tie-break
terms so the optimum lands on the bid the clearing engine expects: bids at
the realized marginal price with full quantities, and empty bids for boxes
that are never accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp as lpm
from .clearing import Bid
from .stagelp import StageSkeleton, renewable_block_generation

AS_BID = "as-bid"
AT_SPOT = "at-spot"


@dataclass(frozen=True)
class TieBreaks:
    as_bid: float = 0.0      # pull settlement toward bidding at the spot
    accept: float = 0.0      # reward offering quantity in accepted boxes
    parsimony: float = 0.0   # penalize quantity anywhere (keeps unused boxes empty)


# negative as_bid: within acceptance-equivalent boxes, prefer the cheapest,
# so inframarginal energy is dispatched ahead of same-value rivals instead of
# tying with them pro rata
PIPELINE_TIEBREAKS = TieBreaks(as_bid=-1e-6, accept=1e-8, parsimony=1e-10)


def acceptance(grid, spot_scenarios) -> np.ndarray:
    """phi[b, n, k] = 1 when box price n clears under scenario k's block-b
    spot (boundary ties accepted). Rows are monotone in n by construction."""
    grid = np.asarray(grid, dtype=float)
    spots = np.asarray(spot_scenarios, dtype=float)  # (B, K)
    return (grid[None, :, None] <= spots[:, None, :] + 1e-9).astype(float)


def default_grid(spot_values, deficit_cost, size=8, extra=()) -> np.ndarray:
    """Box prices from spot-value quantiles plus the deficit cost cap.

    ``extra`` adds strategically relevant price points (typically rival
    marginal costs) so offer curves can undercut or match them exactly even
    when the observed spots cluster far away.
    """
    vals = np.asarray(spot_values, dtype=float).ravel()
    qs = np.quantile(vals, np.linspace(0.0, 1.0, max(size - 2, 2)))
    extra = np.asarray(extra, dtype=float).ravel()
    grid = np.unique(
        np.round(np.concatenate([[0.0], qs, extra, [deficit_cost]]), 9)
    )
    return grid


@dataclass
class OptBidResult:
    quantities: np.ndarray   # (blocks, boxes)
    grid: np.ndarray
    objective: float         # expected profit without tie-break terms
    bids: list               # Bid per block, zero segments dropped


def build_optbid_lp(
    view,
    system,
    t,
    s,
    state,
    scenarios,
    fvf,
    grid,
    spot_scenarios,
    probs,
    opening_labels_per_k=None,
    settlement=AS_BID,
    tie_breaks: TieBreaks = TieBreaks(),
    deficit_cost=None,
):
    """Assemble the box-bid LP; returns (lp, handles dict).

    spot_scenarios: (blocks, K) candidate stage spots; probs: (K,).
    One StageSkeleton per scenario provides the physical recourse and the
    future-value term; q is shared.
    """
    hz = system.horizon
    B = hz.blocks
    grid = np.asarray(grid, dtype=float)
    N = len(grid)
    spots = np.asarray(spot_scenarios, dtype=float)
    probs = np.asarray(probs, dtype=float)
    K = spots.shape[1]
    phi = acceptance(grid, spots)
    renew = renewable_block_generation(view, system, t, s)
    cap = sum(p.capacity for p in view.thermals) + sum(
        h.max_generation for h in view.hydros
    )

    model = system.inflow_model
    idx = [model.hydro_ids.index(h.id) for h in view.hydros]
    openings = scenarios.openings[t + 1][idx] if idx else np.zeros(
        (0, scenarios.num_openings)
    )

    lp = lpm.LinearProgram("max")
    q = [
        [lp.add_var(f"q[{b},{n}]", 0.0, None) for n in range(N)]
        for b in range(B)
    ]
    for b in range(B):
        lp.add_constr(
            f"q_cap[{b}]", [(q[b][n], 1.0) for n in range(N)], "<=", cap + renew[b]
        )

    skeletons = []
    for k in range(K):
        labels = None if opening_labels_per_k is None else opening_labels_per_k[k]
        sk = StageSkeleton(
            lp, view, _restrict(model, view), t, state, openings, fvf,
            B, hz.block_weights, opening_labels=labels, suffix=f"@{k}",
        )
        pk = float(probs[k])
        for row in sk.g:
            for var in row:
                lp.scale_obj(var, pk)
        for var in sk.alpha:
            lp.scale_obj(var, pk)
        # delivery: accepted quantity equals own output (renewables may curtail)
        for b in range(B):
            curtail = lp.add_var(f"curtail[{b}]@{k}", 0.0, renew[b])
            terms = [(row[b], 1.0) for row in sk.e]
            terms += [(row[b], 1.0) for row in sk.g]
            terms.append((curtail, -1.0))
            for n in range(N):
                if phi[b, n, k]:
                    terms.append((q[b][n], -1.0))
            lp.add_constr(f"deliver[{b}]@{k}", terms, "==", -renew[b])
        # settlement revenue
        w = hz.block_weights
        for b in range(B):
            for n in range(N):
                if not phi[b, n, k]:
                    continue
                paid = grid[n] if settlement == AS_BID else spots[b, k]
                coef = pk * w[b] * (paid + tie_breaks.as_bid * grid[n])
                lp.add_obj(q[b][n], coef)
        skeletons.append(sk)

    if tie_breaks.accept or tie_breaks.parsimony:
        p_accept = np.tensordot(phi, probs, axes=([2], [0]))  # (B, N)
        for b in range(B):
            for n in range(N):
                lp.add_obj(
                    q[b][n],
                    tie_breaks.accept * p_accept[b, n] - tie_breaks.parsimony,
                )
    return lp, {"q": q, "skeletons": skeletons, "phi": phi, "grid": grid,
                "probs": probs, "spots": spots}


def solve_optbid(
    view, system, t, s, state, scenarios, fvf, grid, spot_scenarios, probs,
    opening_labels_per_k=None, settlement=AS_BID, tie_breaks=TieBreaks(),
    agent_id="", zero_tol=1e-9,
) -> OptBidResult:
    lp, h = build_optbid_lp(
        view, system, t, s, state, scenarios, fvf, grid, spot_scenarios, probs,
        opening_labels_per_k, settlement, tie_breaks,
    )
    sol = lpm.solve(lp)
    if not sol.optimal:
        raise RuntimeError(f"bid conversion at stage {t}: {sol.status}")
    B, N = system.horizon.blocks, len(h["grid"])
    quantities = np.array(
        [[sol.primal[h["q"][b][n]] for n in range(N)] for b in range(B)]
    )
    quantities[np.abs(quantities) < zero_tol] = 0.0
    # report the objective without the tie-break perturbations
    obj = _clean_objective(sol, h, system, settlement, tie_breaks, quantities)
    bids = []
    for b in range(B):
        segs = tuple(
            (float(h["grid"][n]), float(quantities[b, n]))
            for n in range(N)
            if quantities[b, n] > 0.0
        )
        bids.append(Bid(agent_id, t, s, b, segs))
    return OptBidResult(quantities, h["grid"], obj, bids)


def _clean_objective(sol, h, system, settlement, tb, quantities):
    obj = sol.objective
    if tb == TieBreaks():
        return obj
    w = system.horizon.block_weights
    phi, probs, grid, spots = h["phi"], h["probs"], h["grid"], h["spots"]
    B, N = quantities.shape
    for b in range(B):
        for n in range(N):
            qv = quantities[b, n]
            if qv == 0.0:
                continue
            p_accept = float(phi[b, n] @ probs)
            obj -= tb.as_bid * grid[n] * w[b] * float(
                (phi[b, n] * probs).sum()
            ) * qv
            obj -= (tb.accept * p_accept - tb.parsimony) * qv
    # parsimony also applies to zero quantities, where it contributes nothing
    return obj


def _restrict(model, view):
    from .policy import _ViewInflowModel

    return _ViewInflowModel(model, view)
