"""Curated study fixtures: a two-stage toy, a hydro duopoly, and a
Panama-sized hydrothermal profile generated from seeded aggregates.

The Panama-like profile matches published system totals (thermal ~1145 MW
over 22 plants, hydro ~1674 MW over 42 plants including one nine-plant
cascade, demand growing 850 -> 1050 MW) with individual plant parameters
drawn deterministically from a seed, since plant-level data is not public.
"""

from __future__ import annotations

import numpy as np

from .system import SystemModel, system_from_dict


def toy_two_stage() -> SystemModel:
    """Two stages, cheap+dear thermal, one 20 MWh reservoir; saving the water
    for stage two costs 1000 in total instead of the myopic 2500."""
    return system_from_dict({
        "plants": {
            "thermal": [
                {"id": "t_cheap", "cost": 50.0, "capacity": 10.0},
                {"id": "t_dear", "cost": 200.0, "capacity": 15.0},
            ],
            "hydro": [
                {"id": "h1", "production_factor": 1.0, "max_turbine": 20.0,
                 "max_storage": 20.0, "max_generation": 20.0,
                 "initial_storage": 20.0},
            ],
        },
        "horizon": {"stages": 2, "blocks": 1, "scenarios": 1, "openings": 1,
                    "demand": [[20.0], [20.0]]},
        "inflow_model": {
            "h1": {"coefficients": 0.0,
                   "residual": {"type": "constant", "mean": 0.0}},
        },
    })


def duopoly(stages=6, scenarios=6, openings=3) -> SystemModel:
    """Two symmetric hydro price makers facing a thermal price-taker fringe.

    Curated so the competitive outcome is pinned: maker water is abundant
    (expected inflow exceeds turbine capacity), so centralized dispatch runs
    the reservoirs flat out and the wide 50-cost fringe tier is marginal in
    every stage and scenario. Makers can only withhold relative to that, so
    no bid profile can push any spot below the centralized level.
    """
    demand = [[30.0]] * stages
    hydro = dict(production_factor=1.0, max_turbine=14.0, max_storage=60.0,
                 max_generation=14.0, initial_storage=60.0)
    return system_from_dict({
        "plants": {
            "thermal": [
                {"id": "f1", "cost": 50.0, "capacity": 20.0},
                {"id": "f2", "cost": 60.0, "capacity": 5.0},
                {"id": "f3", "cost": 75.0, "capacity": 5.0},
                {"id": "f4", "cost": 140.0, "capacity": 5.0},
            ],
            "hydro": [
                {"id": "hA", **hydro},
                {"id": "hB", **hydro},
            ],
        },
        "agents": [
            {"id": "fringe", "kind": "price_taker",
             "thermal": ["f1", "f2", "f3", "f4"]},
            {"id": "mA", "kind": "price_maker", "hydro": ["hA"]},
            {"id": "mB", "kind": "price_maker", "hydro": ["hB"]},
        ],
        "horizon": {"stages": stages, "blocks": 1, "scenarios": scenarios,
                    "openings": openings, "demand": demand[:stages]},
        "inflow_model": {
            h: {"coefficients": 0.0,
                "residual": {"type": "lognormal", "mean": 16.0, "sd": 2.0}}
            for h in ("hA", "hB")
        },
    })


def _split_total(rng, total, n, spread=0.6):
    """n positive shares summing exactly to total, seeded."""
    raw = rng.uniform(1.0 - spread, 1.0 + spread, n)
    return total * raw / raw.sum()


def panama_like(stages=12, scenarios=20, openings=10, blocks=1, seed=20) -> SystemModel:
    """Seeded hydrothermal profile at the published aggregate scale.

    Four agents: three price makers (~681 / 539 / 499 MW) and one price-taker
    fringe holding the remainder (~1100 MW). All hydros run of river,
    including a nine-plant cascade. AR(1) inflows.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    nT, nH = 22, 42

    # thermal stack: a broad base tier with a gentle cost slope is marginal
    # under normal hydrology; mid and peak tiers only clear in dry extremes.
    # The wide tier keeps single-step price pushes more expensive in withheld
    # energy than they recover in price, so strategic bidding settles.
    t_caps = np.concatenate([
        _split_total(rng, 825.0, 14),   # base tier
        _split_total(rng, 200.0, 5),    # mid peakers
        _split_total(rng, 120.0, 3),    # dry-year peakers
    ])
    t_costs = np.concatenate([
        np.linspace(88.0, 104.0, 14),
        np.sort(rng.uniform(150.0, 190.0, 5)),
        np.sort(rng.uniform(230.0, 260.0, 3)),
    ])
    thermals = [
        {"id": f"t{j:02d}", "cost": float(t_costs[j]), "capacity": float(t_caps[j])}
        for j in range(nT)
    ]

    h_caps = _split_total(rng, 1674.0, nH)
    hydros = []
    cascade = [f"h{j:02d}" for j in range(9)]  # h00 -> h01 -> ... -> h08
    # all plants run of river: on the near-flat base tier, reservoir
    # scheduling is indifferent across stages, and that degeneracy keeps
    # best-response bids wandering instead of reaching a fixed point
    for j in range(nH):
        hid = f"h{j:02d}"
        cap = float(h_caps[j])
        hydros.append({
            "id": hid,
            "production_factor": float(rng.uniform(0.8, 1.2)),
            "max_turbine": cap,
            "max_storage": 0.0,
            "max_generation": cap,
            "initial_storage": 0.0,
            "downstream": cascade[j + 1] if hid in cascade[:-1] else None,
        })

    # demand ramps 850 -> 1050 over the horizon
    demand = np.linspace(850.0, 1050.0, stages)[:, None]
    demand = np.repeat(demand, blocks, axis=1)

    # allocate plants to agents by target maker sizes
    targets = {"m1": 681.0, "m2": 539.0, "m3": 499.0}
    order = rng.permutation(nH)
    agents = {a: {"thermal": [], "hydro": []} for a in
              ("m1", "m2", "m3", "fringe")}
    sizes = dict.fromkeys(targets, 0.0)
    for j in order:
        hid = f"h{j:02d}"
        owner = min(targets, key=lambda a: sizes[a] / targets[a])
        if sizes[owner] + h_caps[j] > targets[owner] * 1.08:
            owner = "fringe"
        if owner != "fringe":
            sizes[owner] += h_caps[j]
        agents[owner]["hydro"].append(hid)
    for j in range(nT):
        agents["fringe"]["thermal"].append(f"t{j:02d}")

    # AR(1) inflows sized so expected hydro energy covers roughly half of load
    inflow = {}
    for j in range(nH):
        hid = f"h{j:02d}"
        pf = hydros[j]["production_factor"]
        # stationary mean ~0.24 x capacity; with cascade water reuse the
        # fleet's expected energy lands near half of load, so the thermal
        # base tier sets the price in every stage and scenario
        mean_inflow = 0.24 * h_caps[j] / pf
        inflow[hid] = {
            "coefficients": [0.5],
            "history": [mean_inflow],
            "residual": {"type": "lognormal", "mean": 0.5 * mean_inflow,
                         "sd": 0.25 * mean_inflow},
        }

    return system_from_dict({
        "plants": {"thermal": thermals, "hydro": hydros},
        "agents": [
            {"id": a, "kind": ("price_taker" if a == "fringe" else "price_maker"),
             "thermal": spec["thermal"], "hydro": spec["hydro"]}
            for a, spec in agents.items()
        ],
        "horizon": {"stages": stages, "blocks": blocks, "scenarios": scenarios,
                    "openings": openings, "demand": demand.tolist()},
        "inflow_model": inflow,
    })
