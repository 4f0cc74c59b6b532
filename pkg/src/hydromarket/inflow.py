"""Periodic autoregressive inflow model and Monte Carlo scenario generation.

Each hydro has an AR recursion a[t] = sum_p phi[t,p] * a[t-p] + xi with a
nonnegativity clamp applied to generated inflows (the clamp is a simulation
device only; inside subproblems the AR constraint stays linear).

Randomness comes from numpy's Philox counter-based generator, so a fixed
(model, horizon, seed) triple reproduces scenario sets bit-identically on any
platform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class InflowError(Exception):
    pass


@dataclass(frozen=True)
class ResidualSpec:
    """Residual distribution for one hydro: lognormal, empirical or constant."""

    kind: str                      # "lognormal" | "empirical" | "constant"
    mean: float = 0.0
    sd: float = 0.0
    samples: tuple = ()

    def draw(self, rng, size):
        if self.kind == "constant":
            return np.full(size, self.mean)
        if self.kind == "lognormal":
            if self.mean <= 0:
                return np.zeros(size)
            if self.sd <= 0:
                return np.full(size, self.mean)
            s2 = np.log1p((self.sd / self.mean) ** 2)
            mu = np.log(self.mean) - 0.5 * s2
            return rng.lognormal(mu, np.sqrt(s2), size)
        if self.kind == "empirical":
            return rng.choice(np.asarray(self.samples, dtype=float), size=size, replace=True)
        raise InflowError(f"unknown residual kind {self.kind!r}")

    def expected(self) -> float:
        if self.kind == "empirical":
            return float(np.mean(self.samples))
        return self.mean


@dataclass(frozen=True)
class HydroInflowSpec:
    coeffs: np.ndarray   # (stages, max_lag); coeffs[t] generates the stage-t inflow
    residual: ResidualSpec
    history: np.ndarray  # (max_lag,), most recent first


@dataclass(frozen=True)
class InflowModel:
    stages: int
    hydro_ids: tuple
    specs: dict = field(default_factory=dict)  # hydro id -> HydroInflowSpec

    @property
    def max_lag(self) -> int:
        if not self.specs:
            return 1
        return max(s.coeffs.shape[1] for s in self.specs.values())

    def spec(self, hydro_id) -> HydroInflowSpec:
        return self.specs[hydro_id]

    def coeffs_for(self, hydro_id, t) -> np.ndarray:
        """AR coefficients of the equation generating the stage-t inflow,
        padded to the model-wide max lag."""
        spec = self.specs[hydro_id]
        row = spec.coeffs[min(max(t, 0), self.stages - 1)]
        out = np.zeros(self.max_lag)
        out[: len(row)] = row
        return out

    def validate(self, hydro_ids):
        missing = set(hydro_ids) - set(self.specs)
        if missing:
            raise InflowError(f"inflow model missing hydros: {sorted(missing)}")
        for hid, spec in self.specs.items():
            if not np.all(np.isfinite(spec.coeffs)):
                raise InflowError(f"hydro {hid!r}: non-finite AR coefficients")
            if spec.residual.kind == "empirical" and len(spec.residual.samples) == 0:
                raise InflowError(f"hydro {hid!r}: empty empirical residual sample")


@dataclass(frozen=True)
class ScenarioSet:
    """Forward inflow paths and per-stage opening residual pools.

    forward[t, i, s]   simulated inflow for stage t, hydro i, scenario s
    openings[t, i, l]  residual pool generating stage-t inflows (t = 0..stages;
                       index ``stages`` is the post-horizon pool used by the
                       last stage's subproblem branching)
    choices[t, s]      which opening index the forward path realized at stage t
    """

    forward: np.ndarray
    openings: np.ndarray
    choices: np.ndarray
    seed: int

    @property
    def stages(self) -> int:
        return self.forward.shape[0]

    @property
    def num_hydros(self) -> int:
        return self.forward.shape[1]

    @property
    def num_scenarios(self) -> int:
        return self.forward.shape[2]

    @property
    def num_openings(self) -> int:
        return self.openings.shape[2]

    def lag_window(self, model: InflowModel, t, s) -> np.ndarray:
        """Inflow state known at stage t: column c holds the stage t-c inflow
        (the current stage first, history values before the horizon start)."""
        P = model.max_lag
        nH = self.num_hydros
        win = np.zeros((nH, P))
        for i, hid in enumerate(model.hydro_ids):
            hist = model.spec(hid).history
            for c in range(P):
                tc = t - c
                if tc >= 0:
                    win[i, c] = self.forward[tc, i, s]
                else:
                    k = -tc - 1
                    win[i, c] = hist[k] if k < len(hist) else 0.0
        return win


def ar_step(model: InflowModel, t, hydro_id, lagged_inflows, residual) -> float:
    """One AR update producing the stage-t inflow, clamped at zero.

    ``lagged_inflows`` is ordered most recent first and must cover every lag.
    """
    coeffs = model.coeffs_for(hydro_id, t)
    lagged = np.asarray(lagged_inflows, dtype=float)
    if len(lagged) < len(np.trim_zeros(coeffs, "b")):
        raise InflowError(
            f"hydro {hydro_id!r} stage {t}: lag window of length {len(lagged)} "
            f"does not cover the AR order"
        )
    lag = np.zeros(len(coeffs))
    lag[: min(len(lagged), len(coeffs))] = lagged[: len(coeffs)]
    return max(0.0, float(coeffs @ lag) + float(residual))


def generate_scenarios(model: InflowModel, horizon, seed: int) -> ScenarioSet:
    """Sample opening pools i.i.d. per stage and forward paths that follow the
    AR recursion, with each forward residual drawn from that stage's pool (so
    the sampled tree and the forward series describe the same discretized
    process). One opening index is shared across hydros per (stage, scenario)."""
    T, S, L = horizon.stages, horizon.scenarios, horizon.openings
    ids = list(model.hydro_ids)
    nH = len(ids)
    rng = np.random.Generator(np.random.Philox(seed))

    openings = np.zeros((T + 1, nH, L))
    for t in range(T + 1):
        for i, hid in enumerate(ids):
            openings[t, i] = model.spec(hid).residual.draw(rng, L)

    choices = rng.integers(0, L, size=(T, S))
    forward = np.zeros((T, nH, S))
    for s in range(S):
        for t in range(T):
            for i, hid in enumerate(ids):
                hist = model.spec(hid).history
                lagged = []
                for p in range(1, model.max_lag + 1):
                    tp = t - p
                    if tp >= 0:
                        lagged.append(forward[tp, i, s])
                    else:
                        k = -tp - 1
                        lagged.append(hist[k] if k < len(hist) else 0.0)
                xi = openings[t, i, choices[t, s]]
                forward[t, i, s] = ar_step(model, t, hid, lagged, xi)
    return ScenarioSet(forward, openings, choices, seed)


def export_csv(scenarios: ScenarioSet, model: InflowModel, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "hydro", "scenario", "value"])
        for t in range(scenarios.stages):
            for i, hid in enumerate(model.hydro_ids):
                for s in range(scenarios.num_scenarios):
                    w.writerow([t, hid, s, repr(float(scenarios.forward[t, i, s]))])


def import_csv(path, model: InflowModel, stages, num_scenarios) -> np.ndarray:
    forward = np.zeros((stages, len(model.hydro_ids), num_scenarios))
    index = {hid: i for i, hid in enumerate(model.hydro_ids)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            forward[int(row["stage"]), index[row["hydro"]], int(row["scenario"])] = float(
                row["value"]
            )
    return forward


# -- parsing ---------------------------------------------------------------


def parse_inflow_model(doc: dict, hydro_ids, stages) -> InflowModel:
    """Build an InflowModel from the ``inflow_model`` JSON section.

    Per-hydro entries: ``coefficients`` (scalar, per-lag list, or per-stage
    list of lists), ``residual`` ({"type", "mean", "sd"} or {"type":
    "empirical", "samples"}), ``history`` (most recent first). Hydros absent
    from the section get zero inflows.
    """
    specs = {}
    per_hydro = doc.get("hydros", doc) if doc else {}
    for hid in hydro_ids:
        entry = per_hydro.get(hid, {})
        raw = entry.get("coefficients", 0.0)
        arr = np.asarray(raw, dtype=float)
        if arr.ndim == 0:
            coeffs = np.full((stages, 1), float(arr))
        elif arr.ndim == 1:
            coeffs = np.tile(arr, (stages, 1))
        else:
            if arr.shape[0] != stages:
                raise InflowError(f"hydro {hid!r}: per-stage coefficients need {stages} rows")
            coeffs = arr
        rdoc = entry.get("residual", {"type": "constant", "mean": 0.0})
        kind = rdoc.get("type", "lognormal")
        if kind == "empirical":
            residual = ResidualSpec("empirical", samples=tuple(float(x) for x in rdoc["samples"]))
        else:
            residual = ResidualSpec(kind, mean=float(rdoc.get("mean", 0.0)),
                                    sd=float(rdoc.get("sd", 0.0)))
        history = np.asarray(entry.get("history", [0.0] * coeffs.shape[1]), dtype=float)
        specs[hid] = HydroInflowSpec(coeffs, residual, history)
    return InflowModel(stages=stages, hydro_ids=tuple(hydro_ids), specs=specs)
