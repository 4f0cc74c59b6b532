"""Physical and study-level data: plants, cascade topology, agents, horizon.

A ``SystemModel`` is loaded from a single JSON file (see docs/system_schema.md)
and is immutable after validation, so it can be shared freely across workers.

Units: power in MW, energy in MWh, water in hm3, prices in currency/MWh.
The hydro production factor converts hm3 of turbined water per stage into MWh
(one stage is the unit of time, so average-MW and per-stage-MWh coincide for
block weight 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .inflow import InflowModel, parse_inflow_model

PRICE_MAKER = "price_maker"
PRICE_TAKER = "price_taker"


class ValidationError(Exception):
    pass


@dataclass(frozen=True)
class ThermalPlant:
    id: str
    cost: float
    capacity: float


@dataclass(frozen=True)
class HydroPlant:
    id: str
    production_factor: float  # MWh per hm3
    max_turbine: float        # hm3 per stage
    max_storage: float        # hm3
    max_generation: float     # MW
    initial_storage: float    # hm3
    downstream: str | None = None


@dataclass(frozen=True)
class RenewablePlant:
    id: str
    generation: np.ndarray  # broadcastable to (stages, blocks, scenarios), MW


@dataclass(frozen=True)
class Agent:
    id: str
    kind: str  # PRICE_MAKER or PRICE_TAKER
    thermal_ids: tuple = ()
    hydro_ids: tuple = ()
    renewable_ids: tuple = ()


@dataclass(frozen=True)
class StudyHorizon:
    stages: int
    blocks: int
    scenarios: int
    openings: int
    demand: np.ndarray                 # (stages, blocks), MW
    block_weights: np.ndarray = None   # (blocks,), sums to 1

    def __post_init__(self):
        if self.block_weights is None:
            object.__setattr__(self, "block_weights", np.full(self.blocks, 1.0 / self.blocks))


@dataclass(frozen=True)
class AgentView:
    """One agent's plants (G_i, H_i, R_i)."""

    thermals: tuple
    hydros: tuple
    renewables: tuple


@dataclass(frozen=True)
class SystemModel:
    thermals: tuple
    hydros: tuple
    renewables: tuple
    agents: tuple
    horizon: StudyHorizon
    inflow_model: InflowModel
    _hydro_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_hydro_index", {h.id: i for i, h in enumerate(self.hydros)})
        validate_system(self)

    # -- lookups -----------------------------------------------------------

    def thermal(self, pid) -> ThermalPlant:
        return next(p for p in self.thermals if p.id == pid)

    def hydro(self, pid) -> HydroPlant:
        return self.hydros[self._hydro_index[pid]]

    def renewable(self, pid) -> RenewablePlant:
        return next(p for p in self.renewables if p.id == pid)

    def agent(self, aid) -> Agent:
        for a in self.agents:
            if a.id == aid:
                return a
        raise ValidationError(f"unknown agent id {aid!r}")

    def upstream_of(self, hydro_id) -> list:
        """M(i): hydros that spill or turbine into ``hydro_id``."""
        return [h.id for h in self.hydros if h.downstream == hydro_id]

    def max_thermal_cost(self) -> float:
        return max((p.cost for p in self.thermals), default=100.0)

    def renewable_generation(self, pid, t, b, s) -> float:
        gen = np.asarray(self.renewable(pid).generation, dtype=float)
        full = np.broadcast_to(
            gen, (self.horizon.stages, self.horizon.blocks, self.horizon.scenarios)
        )
        return float(full[t, b, s])

    def to_dict(self) -> dict:
        """Round-trippable JSON document (see docs/system_schema.md)."""
        hz = self.horizon
        model = self.inflow_model
        inflow = {}
        for hid in model.hydro_ids:
            spec = model.spec(hid)
            r = spec.residual
            rdoc = {"type": r.kind}
            if r.kind == "empirical":
                rdoc["samples"] = list(r.samples)
            else:
                rdoc.update(mean=r.mean, sd=r.sd)
            inflow[hid] = {
                "coefficients": np.asarray(spec.coeffs).tolist(),
                "residual": rdoc,
                "history": np.asarray(spec.history).tolist(),
            }
        return {
            "plants": {
                "thermal": [
                    {"id": p.id, "cost": p.cost, "capacity": p.capacity}
                    for p in self.thermals
                ],
                "hydro": [
                    {"id": h.id, "production_factor": h.production_factor,
                     "max_turbine": h.max_turbine, "max_storage": h.max_storage,
                     "max_generation": h.max_generation,
                     "initial_storage": h.initial_storage,
                     "downstream": h.downstream}
                    for h in self.hydros
                ],
                "renewable": [
                    {"id": p.id, "generation": np.asarray(p.generation).tolist()}
                    for p in self.renewables
                ],
            },
            "agents": [
                {"id": a.id, "kind": a.kind, "thermal": list(a.thermal_ids),
                 "hydro": list(a.hydro_ids), "renewable": list(a.renewable_ids)}
                for a in self.agents
            ],
            "horizon": {
                "stages": hz.stages, "blocks": hz.blocks,
                "scenarios": hz.scenarios, "openings": hz.openings,
                "demand": np.asarray(hz.demand).tolist(),
                "block_weights": np.asarray(hz.block_weights).tolist(),
            },
            "inflow_model": inflow,
        }


def validate_system(system: SystemModel):
    seen = set()
    for p in list(system.thermals) + list(system.hydros) + list(system.renewables):
        if p.id in seen:
            raise ValidationError(f"duplicate plant id {p.id!r}")
        seen.add(p.id)

    for p in system.thermals:
        if p.cost < 0:
            raise ValidationError(f"thermal {p.id!r}: cost must be >= 0")
        if p.capacity < 0:
            raise ValidationError(f"thermal {p.id!r}: capacity must be >= 0")
    hydro_ids = {h.id for h in system.hydros}
    for h in system.hydros:
        for attr in ("production_factor", "max_turbine", "max_storage", "max_generation"):
            if getattr(h, attr) < 0:
                raise ValidationError(f"hydro {h.id!r}: {attr} must be >= 0")
        if not (0 <= h.initial_storage <= h.max_storage + 1e-9):
            raise ValidationError(
                f"hydro {h.id!r}: initial_storage {h.initial_storage} outside [0, {h.max_storage}]"
            )
        if h.downstream is not None and h.downstream not in hydro_ids:
            raise ValidationError(f"hydro {h.id!r}: unknown downstream {h.downstream!r}")
    # downstream links must form a forest
    for h in system.hydros:
        slow = h.id
        node, hops = h.downstream, 0
        while node is not None:
            if node == h.id:
                raise ValidationError(f"cascade cycle through hydro {h.id!r}")
            hops += 1
            if hops > len(system.hydros):
                raise ValidationError(f"cascade cycle reachable from hydro {slow!r}")
            node = system.hydro(node).downstream
    for r in system.renewables:
        if np.any(np.asarray(r.generation) < 0):
            raise ValidationError(f"renewable {r.id!r}: generation must be >= 0")

    hz = system.horizon
    for attr in ("stages", "blocks", "scenarios", "openings"):
        if getattr(hz, attr) < 1:
            raise ValidationError(f"horizon: {attr} must be >= 1")
    if hz.demand.shape != (hz.stages, hz.blocks):
        raise ValidationError(
            f"demand shape {hz.demand.shape} != (stages, blocks) = {(hz.stages, hz.blocks)}"
        )
    if np.any(hz.demand < 0):
        raise ValidationError("demand must be >= 0")
    if abs(float(np.sum(hz.block_weights)) - 1.0) > 1e-9:
        raise ValidationError("block duration weights must sum to 1")

    # ownership partition
    owned = []
    for a in system.agents:
        if a.kind not in (PRICE_MAKER, PRICE_TAKER):
            raise ValidationError(f"agent {a.id!r}: unknown kind {a.kind!r}")
        owned.extend(a.thermal_ids)
        owned.extend(a.hydro_ids)
        owned.extend(a.renewable_ids)
    if len(owned) != len(set(owned)):
        raise ValidationError("agent plant sets are not pairwise disjoint")
    all_ids = {p.id for p in system.thermals} | hydro_ids | {p.id for p in system.renewables}
    missing = all_ids - set(owned)
    unknown = set(owned) - all_ids
    if unknown:
        raise ValidationError(f"agents reference unknown plants: {sorted(unknown)}")
    if missing:
        raise ValidationError(f"plants not owned by any agent: {sorted(missing)}")

    system.inflow_model.validate(hydro_ids)


def agent_partition(system: SystemModel, agent_id) -> tuple[AgentView, AgentView]:
    """Return (view, complement): the agent's plants and everyone else's."""
    agent = system.agent(agent_id)
    view = AgentView(
        thermals=tuple(p for p in system.thermals if p.id in agent.thermal_ids),
        hydros=tuple(p for p in system.hydros if p.id in agent.hydro_ids),
        renewables=tuple(p for p in system.renewables if p.id in agent.renewable_ids),
    )
    complement = AgentView(
        thermals=tuple(p for p in system.thermals if p.id not in agent.thermal_ids),
        hydros=tuple(p for p in system.hydros if p.id not in agent.hydro_ids),
        renewables=tuple(p for p in system.renewables if p.id not in agent.renewable_ids),
    )
    return view, complement


def system_view(system: SystemModel) -> AgentView:
    """The whole system as a single view (centralized dispatch)."""
    return AgentView(system.thermals, system.hydros, system.renewables)


# -- JSON loading ----------------------------------------------------------


def load_system(path) -> SystemModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    return system_from_dict(doc)


def system_from_dict(doc: dict) -> SystemModel:
    try:
        plants = doc["plants"]
        hz = doc["horizon"]
    except KeyError as exc:
        raise ValidationError(f"missing top-level section {exc.args[0]!r}") from exc

    thermals = tuple(
        ThermalPlant(str(p["id"]), float(p["cost"]), float(p["capacity"]))
        for p in plants.get("thermal", [])
    )
    hydros = tuple(
        HydroPlant(
            str(p["id"]),
            float(p["production_factor"]),
            float(p["max_turbine"]),
            float(p["max_storage"]),
            float(p["max_generation"]),
            float(p["initial_storage"]),
            None if p.get("downstream") in (None, "") else str(p["downstream"]),
        )
        for p in plants.get("hydro", [])
    )
    renewables = tuple(
        RenewablePlant(str(p["id"]), np.asarray(p["generation"], dtype=float))
        for p in plants.get("renewable", [])
    )

    agents_doc = doc.get("agents")
    if not agents_doc:
        # single implicit price-taker owning everything
        agents_doc = [
            {
                "id": "system",
                "kind": PRICE_TAKER,
                "thermal": [p.id for p in thermals],
                "hydro": [p.id for p in hydros],
                "renewable": [p.id for p in renewables],
            }
        ]
    agents = tuple(
        Agent(
            str(a["id"]),
            str(a["kind"]),
            tuple(a.get("thermal", [])),
            tuple(a.get("hydro", [])),
            tuple(a.get("renewable", [])),
        )
        for a in agents_doc
    )

    demand_raw = doc.get("demand", hz.get("demand"))
    if demand_raw is None:
        raise ValidationError("missing 'demand' (top level or under 'horizon')")
    demand = np.asarray(demand_raw, dtype=float)
    if demand.ndim == 1:
        demand = demand[:, None]
    blocks = int(hz.get("blocks", demand.shape[1]))
    weights = hz.get("block_weights")
    horizon = StudyHorizon(
        stages=int(hz["stages"]),
        blocks=blocks,
        scenarios=int(hz.get("scenarios", 1)),
        openings=int(hz.get("openings", 1)),
        demand=demand,
        block_weights=None if weights is None else np.asarray(weights, dtype=float),
    )

    inflow_model = parse_inflow_model(doc.get("inflow_model", {}), [h.id for h in hydros],
                                      horizon.stages)
    return SystemModel(thermals, hydros, renewables, agents, horizon, inflow_model)
