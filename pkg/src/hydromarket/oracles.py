"""Independent reference solvers for small instances.

Two oracles cross-check the cutting-plane recursion on tiny systems:

* an extensive-form deterministic-equivalent LP over the finite residual
  tree (exact for the discretized process), and
* grid-based stochastic dynamic programming with the future cost expressed
  as a free convex combination of tabulated grid values.

Both share only the LP substrate with the production code; all modeling is
re-derived here from scratch on purpose.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import lp as lpm
from .inflow import ar_step


def _stage_cost_block(lp, system, t, demand_row, deficit_cost, tag):
    """Add one stage's generation variables + load balance; returns handles."""
    hz = system.horizon
    w = hz.block_weights
    g = [
        [lp.add_var(f"g[{p.id},{b}]{tag}", 0.0, p.capacity, obj=p.cost * w[b])
         for b in range(hz.blocks)]
        for p in system.thermals
    ]
    e = [
        [lp.add_var(f"e[{h.id},{b}]{tag}", 0.0, h.max_generation)
         for b in range(hz.blocks)]
        for h in system.hydros
    ]
    dvar = [
        lp.add_var(f"def[{b}]{tag}", 0.0, None, obj=deficit_cost * w[b])
        for b in range(hz.blocks)
    ]
    for b in range(hz.blocks):
        terms = (
            [(row[b], 1.0) for row in g]
            + [(row[b], 1.0) for row in e]
            + [(dvar[b], 1.0)]
        )
        lp.add_constr(f"bal[{b}]{tag}", terms, "==", demand_row[b])
    return g, e, dvar


def _add_hydro_stage(lp, system, e, inflows, v_prev, tag):
    """Water balance + conversion for one tree node; returns end storages."""
    hz = system.horizon
    w = hz.block_weights
    v = [lp.add_var(f"v[{h.id}]{tag}", 0.0, h.max_storage) for h in system.hydros]
    u = [lp.add_var(f"u[{h.id}]{tag}", 0.0, h.max_turbine) for h in system.hydros]
    x = [lp.add_var(f"x[{h.id}]{tag}", 0.0, None) for h in system.hydros]
    for i, h in enumerate(system.hydros):
        terms = [(v[i], 1.0), (u[i], 1.0), (x[i], 1.0)]
        rhs = inflows[i]
        if v_prev is not None:
            terms.append((v_prev[i], -1.0))
            rhs_add = 0.0
        else:
            rhs_add = h.initial_storage
        for j, up in enumerate(system.hydros):
            if up.downstream == h.id:
                terms.append((u[j], -1.0))
                terms.append((x[j], -1.0))
        lp.add_constr(f"wb[{h.id}]{tag}", terms, "==", rhs + rhs_add)
        cterms = [(e[i][b], w[b]) for b in range(hz.blocks)]
        cterms.append((u[i], -h.production_factor))
        lp.add_constr(f"cv[{h.id}]{tag}", cterms, "==", 0.0)
    return v


def solve_extensive_form(system, scenarios, scenario, deficit_cost):
    """Exact expected cost over the residual tree rooted at one forward
    scenario's first-stage inflows.

    Stage 0 inflows are the scenario's realized values; stage t >= 1 branches
    over every residual in the stage-t opening pool with equal probability.
    Returns the optimal expected cost.
    """
    model = system.inflow_model
    hz = system.horizon
    T, L = hz.stages, scenarios.num_openings
    nH = len(system.hydros)
    ids = [h.id for h in system.hydros]
    P = model.max_lag

    lp = lpm.LinearProgram("min")

    # enumerate tree nodes as residual-choice paths; node at stage t is a
    # tuple of t branch indices (stage 0 has the empty path)
    def node_inflows(path):
        """Inflow vector and lag windows along a path, via the AR recursion."""
        inflows = np.zeros((len(path) + 1, nH))
        for i, hid in enumerate(ids):
            hist = model.spec(hid).history
            series = []
            for t in range(len(path) + 1):
                lagged = []
                for p in range(1, P + 1):
                    tp = t - p
                    if tp >= 0:
                        lagged.append(series[tp])
                    else:
                        k = -tp - 1
                        lagged.append(hist[k] if k < len(hist) else 0.0)
                if t == 0:
                    a = scenarios.forward[0, i, scenario]
                else:
                    xi = scenarios.openings[t, i, path[t - 1]]
                    a = ar_step(model, t, hid, lagged, xi)
                series.append(a)
                inflows[t, i] = a
            # note: ar_step applies the nonnegativity clamp, matching simulation
        return inflows

    storages = {}  # path -> storage var list
    for t in range(T):
        for path in itertools.product(range(L), repeat=t):
            prob = L ** (-t)
            tag = "@" + ".".join(map(str, path)) if path else "@r"
            inflows = node_inflows(path)[t]
            g, e, dvar = _stage_cost_block(
                lp, system, t, hz.demand[t], deficit_cost, tag
            )
            # probability-weight the node's objective contribution
            for row in g:
                for var in row:
                    lp.scale_obj(var, prob)
            for var in dvar:
                lp.scale_obj(var, prob)
            parent = storages.get(path[:-1]) if path else None
            storages[path] = _add_hydro_stage(lp, system, e, inflows, parent, tag)

    sol = lpm.solve(lp)
    if not sol.optimal:
        raise RuntimeError(f"extensive form: {sol.status}")
    return sol.objective


def expected_extensive_cost(system, scenarios, deficit_cost):
    vals = [
        solve_extensive_form(system, scenarios, s, deficit_cost)
        for s in range(system.horizon.scenarios)
    ]
    return float(np.mean(vals))


def run_sdp_reference(system, scenarios, deficit_cost, grid_points=9):
    """Grid SDP for memoryless inflows (all AR coefficients zero).

    State is the joint storage vector; per stage the expected value table is
    computed over the tensor grid, taking expectations over the stage's
    opening pool. Future cost enters each one-stage LP as a free convex
    combination of tabulated grid values, which is the lower convex envelope
    of the table and therefore exact in the refinement limit for convex value
    functions. Returns the expected first-stage cost at the initial storages
    averaged over forward scenarios' stage-0 inflows.
    """
    model = system.inflow_model
    hz = system.horizon
    T, L = hz.stages, scenarios.num_openings
    nH = len(system.hydros)
    for h in system.hydros:
        if np.any(model.spec(h.id).coeffs != 0.0):
            raise ValueError("SDP oracle supports memoryless inflows only")

    axes = [np.linspace(0.0, h.max_storage, grid_points) for h in system.hydros]
    grid = np.array(list(itertools.product(*axes)))  # (G, nH)
    G = len(grid)

    def stage_solve(t, v0, inflows, table):
        lp = lpm.LinearProgram("min")
        g, e, dvar = _stage_cost_block(lp, system, t, hz.demand[t], deficit_cost, "")
        v = _add_hydro_stage(lp, system, e, inflows, None, "")
        # override start: _add_hydro_stage put initial_storage on the rhs
        for i, h in enumerate(system.hydros):
            lp.set_rhs(f"wb[{h.id}]", inflows[i] + v0[i])
        if table is not None:
            lam = [lp.add_var(f"lam[{p}]", 0.0, None, obj=float(table[p]))
                   for p in range(G)]
            lp.add_constr("lam_sum", [(l, 1.0) for l in lam], "==", 1.0)
            for i in range(nH):
                terms = [(lam[p], float(grid[p, i])) for p in range(G)]
                terms.append((v[i], -1.0))
                lp.add_constr(f"lam_mix[{i}]", terms, "==", 0.0)
        sol = lpm.solve(lp)
        if not sol.optimal:
            raise RuntimeError(f"sdp stage {t}: {sol.status}")
        return sol.objective

    table = None  # expected cost-to-go of the next stage on the grid
    for t in range(T - 1, -1, -1):
        if t == 0:
            break
        new = np.zeros(G)
        for p in range(G):
            acc = 0.0
            for l in range(L):
                inflows = np.maximum(scenarios.openings[t, :, l], 0.0)
                acc += stage_solve(t, grid[p], inflows, table)
            new[p] = acc / L
        table = new

    vals = []
    v_init = np.array([h.initial_storage for h in system.hydros])
    for s in range(hz.scenarios):
        vals.append(stage_solve(0, v_init, scenarios.forward[0, :, s], table))
    return float(np.mean(vals))
