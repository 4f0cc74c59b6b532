"""Common stage-subproblem skeleton shared by every recursion.

Builds the hydro/thermal part of a stage LP: water balance with cascade
routing, turbine-to-energy conversion, AR branching per opening and the
future-value epigraph (cost sense) or hypograph (benefit sense) constraints.
Incoming storage and the inflow lag window enter through dedicated fixing
constraints whose duals are exactly the cut slopes.

The caller (dispatch, MaxRev, NashBid, OptBid) adds its own demand/revenue
coupling and the objective terms beyond thermal cost.
"""

from __future__ import annotations

import numpy as np

from . import lp as lpm
from .sddp import BENEFIT, COST, Cut, StageState


class StageSkeleton:
    """Hydro/thermal stage LP skeleton for one agent view.

    Parameters
    ----------
    view : AgentView with .thermals/.hydros/.renewables
    model : InflowModel (only the view's hydros are used)
    t : stage index (0-based)
    state : StageState for the view's hydros
    opening_residuals : (num_view_hydros, L) residual pool branching to t+1
    fvf : FutureValueFunction for the value-to-go of stage t+1
    opening_labels : optional (L,) Markov cluster label per opening
    blocks, weights : intra-stage blocks and duration weights
    suffix : name suffix so several skeletons can share one LP (OptBid)
    """

    def __init__(
        self,
        lp,
        view,
        model,
        t,
        state: StageState,
        opening_residuals,
        fvf,
        blocks,
        weights,
        opening_labels=None,
        suffix="",
        thermal_cost_in_obj=True,
    ):
        self.lp = lp
        self.view = view
        self.model = model
        self.t = t
        self.blocks = blocks
        self.weights = np.asarray(weights, dtype=float)
        self.suffix = suffix
        self.sense = fvf.sense if fvf is not None else COST
        nH = len(view.hydros)
        L = opening_residuals.shape[1] if nH else (
            len(opening_labels) if opening_labels is not None else 1
        )
        self.num_openings = L
        P = model.max_lag
        self.max_lag = P
        obj_sign = 1.0 if self.sense == COST else -1.0  # thermal cost enters with its sense

        hydro_ids = [h.id for h in view.hydros]
        hydro_pos = {hid: i for i, hid in enumerate(hydro_ids)}

        sx = suffix
        # variables
        self.v = [lp.add_var(f"v[{h.id}]{sx}", 0.0, h.max_storage) for h in view.hydros]
        self.u = [lp.add_var(f"u[{h.id}]{sx}", 0.0, h.max_turbine) for h in view.hydros]
        self.x = [lp.add_var(f"x[{h.id}]{sx}", 0.0, None) for h in view.hydros]
        self.e = [
            [lp.add_var(f"e[{h.id},{b}]{sx}", 0.0, h.max_generation) for b in range(blocks)]
            for h in view.hydros
        ]
        self.g = [
            [
                lp.add_var(
                    f"g[{p.id},{b}]{sx}",
                    0.0,
                    p.capacity,
                    obj=(obj_sign * p.cost * self.weights[b]) if thermal_cost_in_obj else 0.0,
                )
                for b in range(blocks)
            ]
            for p in view.thermals
        ]
        self.v_in = [lp.add_var(f"v_in[{h.id}]{sx}", None, None) for h in view.hydros]
        self.lagv = [
            [lp.add_var(f"lag[{h.id},{c}]{sx}", None, None) for c in range(P)]
            for h in view.hydros
        ]
        self.a_next = [
            [lp.add_var(f"a_next[{h.id},{l}]{sx}", None, None) for l in range(L)]
            for h in view.hydros
        ]

        # state fixing constraints (duals are the cut slopes)
        self.storage_fix = []
        self.lag_fix = []
        for i, h in enumerate(view.hydros):
            name = f"storage_fix[{h.id}]{sx}"
            lp.add_constr(name, [(self.v_in[i], 1.0)], "==", state.storage[i])
            self.storage_fix.append(name)
            row = []
            for c in range(P):
                cname = f"lag_fix[{h.id},{c}]{sx}"
                lp.add_constr(cname, [(self.lagv[i][c], 1.0)], "==", state.lag_window[i, c])
                row.append(cname)
            self.lag_fix.append(row)

        # water balance with cascade routing (upstream releases arrive within the stage)
        for i, h in enumerate(view.hydros):
            terms = [
                (self.v[i], 1.0),
                (self.v_in[i], -1.0),
                (self.lagv[i][0], -1.0),
                (self.u[i], 1.0),
                (self.x[i], 1.0),
            ]
            for j, up in enumerate(view.hydros):
                if up.downstream == h.id:
                    terms.append((self.u[j], -1.0))
                    terms.append((self.x[j], -1.0))
            lp.add_constr(f"hydro_balance[{h.id}]{sx}", terms, "==", 0.0)

        # turbined water to energy
        for i, h in enumerate(view.hydros):
            terms = [(self.e[i][b], self.weights[b]) for b in range(blocks)]
            terms.append((self.u[i], -h.production_factor))
            lp.add_constr(f"conversion[{h.id}]{sx}", terms, "==", 0.0)

        # AR branching to stage t+1
        for i, h in enumerate(view.hydros):
            coeffs = model.coeffs_for(h.id, t + 1) if t + 1 < model.stages else np.zeros(P)
            for l in range(L):
                terms = [(self.a_next[i][l], 1.0)]
                for c in range(P):
                    if coeffs[c] != 0.0:
                        terms.append((self.lagv[i][c], -coeffs[c]))
                lp.add_constr(
                    f"ar[{h.id},{l}]{sx}", terms, "==", float(opening_residuals[i, l])
                )

        # future value per opening; alphas start pinned at 0 (empty pool) and
        # are freed once sync_cuts materializes their first hypo/epigraph row
        self.fvf = fvf
        self.opening_labels = opening_labels
        self.alpha = [lp.add_var(f"alpha[{l}]{sx}", 0.0, 0.0) for l in range(L)]
        for var in self.alpha:
            lp.add_obj(var, 1.0 / L)
        self._alpha_free = [False] * L
        self._cut_count = [0] * L
        # column template per opening for cut rows: alpha, then per hydro its
        # end storage and inflow references (next-stage draw, then older lags)
        self._cut_cols = []
        for l in range(L):
            cols = [self.alpha[l]]
            for i in range(nH):
                cols.append(self.v[i])
                for c in range(P):
                    cols.append(self.a_next[i][l] if c == 0 else self.lagv[i][c - 1])
            self._cut_cols.append(cols)
        self.sync_cuts()

        self._hydro_pos = hydro_pos

    # -- incremental updates (cached subproblem reuse) ---------------------

    def set_state(self, state: StageState):
        """Repoint the state-fixing rows at a new incoming state."""
        for i, name in enumerate(self.storage_fix):
            self.lp.set_rhs(name, state.storage[i])
        for i, row in enumerate(self.lag_fix):
            for c, name in enumerate(row):
                self.lp.set_rhs(name, state.lag_window[i, c])

    def sync_cuts(self):
        """Materialize constraint rows for cuts added to the pool since the
        last sync; existing rows are untouched, so the LP only grows."""
        if self.fvf is None:
            return
        lp, sx = self.lp, self.suffix
        nH = len(self.view.hydros)
        P = self.max_lag
        rel = ">=" if self.sense == COST else "<="
        for l in range(self.num_openings):
            cluster = (
                None if self.opening_labels is None else int(self.opening_labels[l])
            )
            cuts = self.fvf.cuts_for(self.t + 1, cluster)
            if not cuts:
                continue
            if not self._alpha_free[l]:
                lp.set_var_bounds(self.alpha[l], None, None)
                self._alpha_free[l] = True
            cols = self._cut_cols[l]
            for m in range(self._cut_count[l], len(cuts)):
                cut = cuts[m]
                vals = np.empty(len(cols))
                vals[0] = 1.0
                if nH:
                    vals[1:] = -np.concatenate(
                        [cut.storage_coeffs[:, None], cut.inflow_coeffs], axis=1
                    ).ravel()
                lp.add_constr_fast(f"cut[{l},{m}]{sx}", cols, vals, rel, cut.intercept)
            self._cut_count[l] = len(cuts)

    # -- solution readers --------------------------------------------------

    def end_storage(self, sol) -> np.ndarray:
        return sol.primal[self.v] if self.v else np.zeros(0)

    def fvf_term(self, sol) -> float:
        if not self.alpha:
            return 0.0
        return float(np.sum(sol.primal[self.alpha]) / self.num_openings)

    def thermal_cost(self, sol) -> float:
        total = 0.0
        for p, row in zip(self.view.thermals, self.g):
            for b in range(self.blocks):
                total += p.cost * self.weights[b] * sol.primal[row[b]]
        return total

    def cut(self, sol, state: StageState, stage, cluster=None) -> Cut:
        nH = len(self.view.hydros)
        storage_coeffs = np.array([sol.dual(nm) for nm in self.storage_fix]) if nH else np.zeros(0)
        inflow_coeffs = np.zeros((nH, self.max_lag))
        for i in range(nH):
            for c in range(self.max_lag):
                inflow_coeffs[i, c] = sol.dual(self.lag_fix[i][c])
        intercept = (
            sol.objective
            - float(storage_coeffs @ state.storage)
            - float(np.sum(inflow_coeffs * state.lag_window))
        )
        return Cut(stage, intercept, storage_coeffs, inflow_coeffs, cluster)

    def water_values(self, sol) -> np.ndarray:
        """Marginal worth of one extra unit of inflow (cost saved or revenue
        gained, depending on sense), so it comes out nonnegative."""
        sign = -1.0 if self.sense == COST else 1.0
        return sign * np.array(
            [sol.dual(f"hydro_balance[{h.id}]{self.suffix}") for h in self.view.hydros]
        )


def renewable_block_generation(view, system, t, s) -> np.ndarray:
    """Total renewable output of a view per block at (stage, scenario), MW."""
    out = np.zeros(system.horizon.blocks)
    for r in view.renewables:
        for b in range(system.horizon.blocks):
            out[b] += system.renewable_generation(r.id, t, b, s)
    return out


def max_generation(view, system, t, s) -> np.ndarray:
    """Per-block upper bound on a view's total generation, MW."""
    cap = sum(p.capacity for p in view.thermals) + sum(h.max_generation for h in view.hydros)
    return cap + renewable_block_generation(view, system, t, s)
