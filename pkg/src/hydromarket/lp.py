"""Small LP substrate with named variables and constraints.

Every optimization model in the package (dispatch subproblems, market
clearing cross-checks, bid allocation) is assembled through ``LinearProgram``
and solved with HiGHS.  Each program keeps a persistent HiGHS model in sync
with its Python description, so repeated solves after right-hand-side edits
or appended rows warm-start from the previous basis instead of rebuilding;
this is what makes the cut-by-cut stage resolves in the decomposition loops
cheap.  If the bundled HiGHS bindings are unavailable the module falls back
to one-shot ``scipy.optimize.linprog`` calls.

Duals are reported with the convention ``dual = d(objective)/d(rhs)`` in the
declared objective sense, so for a minimization the dual of a binding "="
demand constraint is the marginal cost of one extra unit of demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:  # scipy ships HiGHS; the pybind core allows incremental model edits
    from scipy.optimize._highspy import _core as _highs_core
except ImportError:  # pragma: no cover - exercised only on exotic scipy builds
    _highs_core = None

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-7
REPORT_TOL = 1e-6


class LpError(Exception):
    pass


class LinearProgram:
    """Incrementally built LP with named variables and constraints.

    Matrix entries live in flat arrays (one slice per constraint, rows in
    construction order) so the whole model or any new tail of it converts to
    solver form without per-entry Python work.
    """

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise LpError(f"unknown objective sense {sense!r}")
        self.sense = sense
        self.var_names: list[str] = []
        self._var_index: dict[str, int] = {}
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.obj: list[float] = []
        # constraints: parallel arrays plus flat coefficient storage
        self.con_names: list[str] = []
        self._con_index: dict[str, int] = {}
        self.con_sense: list[str] = []
        self.con_rhs: list[float] = []
        self._e_cols: list[int] = []
        self._e_vals: list[float] = []
        self._con_start: list[int] = [0]
        # persistent solver state (created on first solve)
        self._solver = None
        self._rhs_log: list[int] = []
        self._bound_log: list[int] = []
        self._obj_log: list[int] = []

    # -- building ----------------------------------------------------------

    def add_var(self, name, lb=0.0, ub=None, obj=0.0) -> int:
        if name in self._var_index:
            raise LpError(f"duplicate variable {name!r}")
        if ub is not None and lb is not None and lb > ub + 1e-12:
            raise LpError(f"variable {name!r} has lb {lb} > ub {ub}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self._var_index[name] = idx
        self.lower.append(-np.inf if lb is None else float(lb))
        self.upper.append(np.inf if ub is None else float(ub))
        self.obj.append(float(obj))
        return idx

    def add_vars(self, names, lb=0.0, ub=None, obj=0.0) -> list[int]:
        return [self.add_var(n, lb=lb, ub=ub, obj=obj) for n in names]

    def set_var_bounds(self, var, lb, ub):
        j = self._col(var)
        self.lower[j] = -np.inf if lb is None else float(lb)
        self.upper[j] = np.inf if ub is None else float(ub)
        if self._solver is not None:
            self._bound_log.append(j)

    def set_obj(self, var, coef):
        j = self._col(var)
        self.obj[j] = float(coef)
        if self._solver is not None:
            self._obj_log.append(j)

    def add_obj(self, var, coef):
        j = self._col(var)
        self.obj[j] += float(coef)
        if self._solver is not None:
            self._obj_log.append(j)

    def scale_obj(self, var, factor):
        j = self._col(var)
        self.obj[j] *= float(factor)
        if self._solver is not None:
            self._obj_log.append(j)

    def _col(self, var) -> int:
        if isinstance(var, str):
            try:
                return self._var_index[var]
            except KeyError:
                raise LpError(f"unknown variable {var!r}") from None
        return int(var)

    def add_constr(self, name, terms, sense, rhs) -> int:
        """``terms`` is an iterable of (variable, coefficient) pairs."""
        if name in self._con_index:
            raise LpError(f"duplicate constraint {name!r}")
        if sense not in ("<=", "==", ">="):
            raise LpError(f"unknown constraint sense {sense!r}")
        acc: dict[int, float] = {}
        for var, coef in terms:
            c = float(coef)
            if c != 0.0:
                j = self._col(var)
                acc[j] = acc.get(j, 0.0) + c
        self._e_cols.extend(acc.keys())
        self._e_vals.extend(acc.values())
        self._con_start.append(len(self._e_cols))
        idx = len(self.con_names)
        self.con_names.append(name)
        self._con_index[name] = idx
        self.con_sense.append(sense)
        self.con_rhs.append(float(rhs))
        return idx

    def add_constr_fast(self, name, cols, vals, sense, rhs) -> int:
        """``add_constr`` for callers that already hold distinct column
        indices and float coefficients (hot loops adding many similar rows)."""
        if name in self._con_index:
            raise LpError(f"duplicate constraint {name!r}")
        self._e_cols.extend(cols)
        self._e_vals.extend(vals)
        self._con_start.append(len(self._e_cols))
        idx = len(self.con_names)
        self.con_names.append(name)
        self._con_index[name] = idx
        self.con_sense.append(sense)
        self.con_rhs.append(float(rhs))
        return idx

    def set_rhs(self, name, rhs):
        i = self._con_index[name] if isinstance(name, str) else int(name)
        self.con_rhs[i] = float(rhs)
        if self._solver is not None:
            self._rhs_log.append(i)

    def rhs(self, name) -> float:
        i = self._con_index[name] if isinstance(name, str) else int(name)
        return self.con_rhs[i]

    def row_bounds(self, i) -> tuple[float, float]:
        """(lhs, rhs) activity bounds of constraint ``i``."""
        b = self.con_rhs[i]
        sense = self.con_sense[i]
        if sense == "==":
            return b, b
        if sense == "<=":
            return -np.inf, b
        return b, np.inf

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constrs(self) -> int:
        return len(self.con_names)

    def constr_entries(self, i):
        """(columns, values) of constraint ``i``."""
        s0, s1 = self._con_start[i], self._con_start[i + 1]
        return self._e_cols[s0:s1], self._e_vals[s0:s1]

    # -- solving -----------------------------------------------------------

    def solve(self) -> "LpSolution":
        return solve(self)

    # -- export ------------------------------------------------------------

    def write_lp(self, path):
        """Write the model in CPLEX-style LP text format (12 significant digits)."""

        def num(x):
            return f"{x:.12g}"

        lines = []
        lines.append("\\ hydromarket LP export")
        lines.append("Minimize" if self.sense == "min" else "Maximize")
        terms = [
            f"{'+' if c >= 0 else '-'} {num(abs(c))} {self.var_names[j]}"
            for j, c in enumerate(self.obj)
            if c != 0.0
        ]
        lines.append(" obj: " + (" ".join(terms) if terms else "0 " + self.var_names[0]))
        lines.append("Subject To")
        rel = {"<=": "<=", "==": "=", ">=": ">="}
        for i, name in enumerate(self.con_names):
            cols, vals = self.constr_entries(i)
            body = " ".join(
                f"{'+' if v >= 0 else '-'} {num(abs(v))} {self.var_names[j]}"
                for j, v in zip(cols, vals)
            )
            lines.append(f" {name}: {body} {rel[self.con_sense[i]]} {num(self.con_rhs[i])}")
        lines.append("Bounds")
        for j, name in enumerate(self.var_names):
            lo, hi = self.lower[j], self.upper[j]
            if lo == -np.inf and hi == np.inf:
                lines.append(f" {name} free")
            elif hi == np.inf:
                lines.append(f" {num(lo)} <= {name}")
            else:
                lines.append(f" {num(lo)} <= {name} <= {num(hi)}")
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class LpSolution:
    status: str
    objective: float
    primal: np.ndarray
    duals: np.ndarray
    _var_index: dict = field(repr=False, default_factory=dict)
    _con_index: dict = field(repr=False, default_factory=dict)

    def value(self, var) -> float:
        if isinstance(var, str):
            var = self._var_index[var]
        return float(self.primal[var])

    def values(self, vars) -> np.ndarray:
        return np.array([self.value(v) for v in vars])

    def dual(self, con) -> float:
        if isinstance(con, str):
            con = self._con_index[con]
        return float(self.duals[con])

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _HighsSolver:
    """Persistent HiGHS model mirroring one ``LinearProgram``.

    The model is always stored as a minimization (max objectives enter with
    flipped signs), so reported marginals convert to the declared-sense dual
    convention by one sign factor.
    """

    def __init__(self, sense):
        self.sign = 1.0 if sense == "min" else -1.0
        h = _highs_core._Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
        h.setOptionValue("dual_feasibility_tolerance", FEAS_TOL)
        self.h = h
        self.n_cols = 0
        self.n_rows = 0

    def sync(self, lp: LinearProgram):
        h, sign = self.h, self.sign
        nc, nr = lp.num_vars, lp.num_constrs
        if nc > self.n_cols:
            sl = slice(self.n_cols, nc)
            empty_i = np.empty(0, dtype=np.int32)
            h.addCols(
                nc - self.n_cols,
                sign * np.asarray(lp.obj[sl], dtype=np.float64),
                np.asarray(lp.lower[sl], dtype=np.float64),
                np.asarray(lp.upper[sl], dtype=np.float64),
                0,
                empty_i,
                empty_i,
                np.empty(0, dtype=np.float64),
            )
            self.n_cols = nc
        if nr > self.n_rows:
            s0, s1 = lp._con_start[self.n_rows], lp._con_start[nr]
            starts = np.asarray(lp._con_start[self.n_rows:nr], dtype=np.int32) - s0
            rhs = np.asarray(lp.con_rhs[self.n_rows:nr], dtype=np.float64)
            senses = np.asarray(lp.con_sense[self.n_rows:nr])
            lhs = np.where(senses == "<=", -np.inf, rhs)
            rhs = np.where(senses == ">=", np.inf, rhs)
            h.addRows(
                nr - self.n_rows,
                lhs,
                rhs,
                s1 - s0,
                starts,
                np.asarray(lp._e_cols[s0:s1], dtype=np.int32),
                np.asarray(lp._e_vals[s0:s1], dtype=np.float64),
            )
            self.n_rows = nr
        if lp._rhs_log:
            for i in lp._rhs_log:
                h.changeRowBounds(i, *lp.row_bounds(i))
            lp._rhs_log.clear()
        if lp._bound_log:
            for j in lp._bound_log:
                h.changeColBounds(j, lp.lower[j], lp.upper[j])
            lp._bound_log.clear()
        if lp._obj_log:
            for j in lp._obj_log:
                h.changeColCost(j, sign * lp.obj[j])
            lp._obj_log.clear()

    def run(self, lp: LinearProgram) -> LpSolution:
        h, sign = self.h, self.sign
        ms_enum = _highs_core.HighsModelStatus
        h.run()
        ms = h.getModelStatus()
        if ms == ms_enum.kUnboundedOrInfeasible:
            # presolve cannot tell the two apart; resolve without it
            h.setOptionValue("presolve", "off")
            h.run()
            ms = h.getModelStatus()
            h.setOptionValue("presolve", "choose")
        n = lp.num_vars
        if ms == ms_enum.kOptimal:
            sol = h.getSolution()
            objective = sign * float(h.getInfo().objective_function_value)
            primal = np.asarray(sol.col_value, dtype=float)
            duals = sign * np.asarray(sol.row_dual, dtype=float)
            if duals.shape[0] != lp.num_constrs:  # pragma: no cover
                duals = np.resize(duals, lp.num_constrs)
            return LpSolution(OPTIMAL, objective, primal, duals,
                              lp._var_index, lp._con_index)
        duals = np.zeros(lp.num_constrs)
        if ms == ms_enum.kInfeasible:
            return LpSolution(INFEASIBLE, np.nan, np.full(n, np.nan), duals,
                              lp._var_index, lp._con_index)
        if ms == ms_enum.kUnbounded:
            return LpSolution(UNBOUNDED, sign * -np.inf, np.full(n, np.nan),
                              duals, lp._var_index, lp._con_index)
        raise LpError(
            f"numerical failure in LP solve: {h.modelStatusToString(ms)}"
        )


def solve(lp: LinearProgram) -> LpSolution:
    """Solve to optimality; infeasibility/unboundedness is a status, not an error."""
    if _highs_core is None:  # pragma: no cover
        return _solve_scipy(lp)
    if lp._solver is None:
        lp._solver = _HighsSolver(lp.sense)
    lp._solver.sync(lp)
    try:
        return lp._solver.run(lp)
    except LpError:
        # warm starts occasionally leave the solver in a numerically bad
        # state; rebuild the model from scratch and solve cold once
        lp._solver = _HighsSolver(lp.sense)
        lp._solver.sync(lp)
        return lp._solver.run(lp)


def _solve_scipy(lp: LinearProgram) -> LpSolution:  # pragma: no cover
    """One-shot fallback through ``scipy.optimize.linprog``."""
    import scipy.sparse as sp
    from scipy.optimize import linprog

    n = lp.num_vars
    m = lp.num_constrs
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * np.asarray(lp.obj, dtype=float)

    rows = np.repeat(np.arange(m), np.diff(lp._con_start))
    cols = np.asarray(lp._e_cols, dtype=int)
    vals = np.asarray(lp._e_vals, dtype=float)
    senses = np.asarray(lp.con_sense)
    rhs = np.asarray(lp.con_rhs, dtype=float)
    flip = np.where(senses == ">=", -1.0, 1.0)

    eq = senses == "=="
    ub = ~eq

    def sub(mask, flip_signs):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return None, None
        remap = np.full(m, -1)
        remap[idx] = np.arange(idx.size)
        emask = mask[rows]
        f = flip_signs[rows[emask]]
        mat = sp.csr_matrix(
            (vals[emask] * f, (remap[rows[emask]], cols[emask])),
            shape=(idx.size, n),
        )
        return mat, flip_signs[idx] * rhs[idx]

    A_eq, b_eq = sub(eq, np.ones(m))
    A_ub, b_ub = sub(ub, flip)
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=list(zip(lp.lower, lp.upper)), method="highs",
        options={"primal_feasibility_tolerance": FEAS_TOL,
                 "dual_feasibility_tolerance": FEAS_TOL},
    )
    duals = np.zeros(m)
    if res.status == 0:
        if A_eq is not None:
            duals[np.flatnonzero(eq)] = sign * res.eqlin.marginals
        if A_ub is not None:
            idx = np.flatnonzero(ub)
            duals[idx] = sign * flip[idx] * res.ineqlin.marginals
        return LpSolution(OPTIMAL, sign * float(res.fun),
                          np.asarray(res.x, dtype=float), duals,
                          lp._var_index, lp._con_index)
    if res.status == 2:
        return LpSolution(INFEASIBLE, np.nan, np.full(n, np.nan), duals,
                          lp._var_index, lp._con_index)
    if res.status == 3:
        return LpSolution(UNBOUNDED, sign * -np.inf, np.full(n, np.nan), duals,
                          lp._var_index, lp._con_index)
    raise LpError(f"numerical failure in LP solve: {res.message}")


def perturb_rhs(lp: LinearProgram, constraint: str, delta: float) -> LpSolution:
    """Re-solve with the rhs of ``constraint`` shifted by ``delta``.

    Used to validate reported duals by finite differences.
    """
    old = lp.rhs(constraint)
    lp.set_rhs(constraint, old + delta)
    try:
        return solve(lp)
    finally:
        lp.set_rhs(constraint, old)
