"""Command-line entry point.

Pipelines: dispatch (centralized SDDP + spot/storage/generation CSVs),
maxrev (one agent's revenue recursion), equilibrium (full fixed-point loop
with convergence diagnostics), gen-case (emit a bundled study as JSON).

Every run writes manifest.json with inputs, seeds, package versions and wall
time, so results are reproducible from the manifest alone. Flags can be
overridden with HYDROMARKET_<FLAG> environment variables.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CONVERGENCE = 2

ENV_PREFIX = "HYDROMARKET_"


def _env_default(name, fallback=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), fallback)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hydromarket",
        description="Hydrothermal market simulation: centralized dispatch, "
        "agent bidding policies and Nash-equilibrium search.",
    )
    p.add_argument("--config", default=_env_default("config"),
                   help="system JSON file (see docs/system_schema.md)")
    p.add_argument("--pipeline", default=_env_default("pipeline", "dispatch"),
                   choices=["dispatch", "maxrev", "optbid", "equilibrium", "gen-case"])
    p.add_argument("--out", default=_env_default("out", "out"),
                   help="output directory")
    p.add_argument("--seed", type=int, default=int(_env_default("seed", "0")))
    p.add_argument("--workers", type=int, default=int(_env_default("workers", "1")),
                   help="reserved; pipelines currently run single-threaded")
    p.add_argument("--profile", default=_env_default("profile"),
                   choices=["toy", "duopoly", "panama-like"],
                   help="bundled case for gen-case, or instead of --config")
    p.add_argument("--clusters", type=int, default=int(_env_default("clusters", "3")))
    p.add_argument("--max-rounds", type=int, default=int(_env_default("max_rounds", "10")))
    p.add_argument("--deficit-cost", type=float,
                   default=_env_default("deficit_cost"))
    p.add_argument("--agent", default=_env_default("agent"),
                   help="agent id for the maxrev pipeline")
    return p


def _load_system(args):
    from . import cases
    from .system import load_system

    if args.config:
        return load_system(args.config)
    profiles = {
        "toy": cases.toy_two_stage,
        "duopoly": cases.duopoly,
        "panama-like": lambda: cases.panama_like(seed=args.seed or 20),
    }
    if args.profile:
        return profiles[args.profile]()
    raise ValueError("either --config or --profile is required")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _manifest(args, outdir, t0, extra):
    import scipy

    from . import __version__

    doc = {
        "pipeline": args.pipeline,
        "config": args.config,
        "profile": args.profile,
        "seed": args.seed,
        "clusters": args.clusters,
        "versions": {
            "hydromarket": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": round(time.time() - t0, 3),
    }
    doc.update(extra)
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2)


def cmd_dispatch(args, outdir) -> int:
    from .dispatch import run_centralized
    from .inflow import generate_scenarios
    from .sddp import SddpConfig

    system = _load_system(args)
    scen = generate_scenarios(system.inflow_model, system.horizon, args.seed)
    res, fvf = run_centralized(
        system, scen, SddpConfig(seed=args.seed),
        None if args.deficit_cost is None else float(args.deficit_cost),
    )
    T, B, S = res.spot.shape
    _write_csv(
        os.path.join(outdir, "spot.csv"),
        ["stage", "block", "scenario", "spot"],
        [(t, b, s, repr(float(res.spot[t, b, s])))
         for t in range(T) for b in range(B) for s in range(S)],
    )
    _write_csv(
        os.path.join(outdir, "storage.csv"),
        ["stage", "scenario", "hydro", "storage"],
        [(t, s, h.id, repr(float(res.storage[t, s, i])))
         for t in range(T) for s in range(S)
         for i, h in enumerate(system.hydros)],
    )
    _write_csv(
        os.path.join(outdir, "generation.csv"),
        ["stage", "block", "scenario", "plant", "generation"],
        [(t, b, s, p.id, repr(float(res.thermal_gen[t, b, s, j])))
         for t in range(T) for b in range(B) for s in range(S)
         for j, p in enumerate(system.thermals)]
        + [(t, b, s, h.id, repr(float(res.hydro_gen[t, b, s, i])))
           for t in range(T) for b in range(B) for s in range(S)
           for i, h in enumerate(system.hydros)],
    )
    print(f"dispatch: lb={res.report.lower_bound:.6g} "
          f"ub={res.report.upper_bound:.6g} "
          f"iterations={res.report.iterations} converged={res.report.converged}")
    return EXIT_OK if res.report.converged else EXIT_NO_CONVERGENCE


def cmd_maxrev(args, outdir) -> int:
    from .dispatch import run_centralized
    from .inflow import generate_scenarios
    from .markov import build_markov_chain
    from .policy import MaxRevPolicy, run_policy
    from .sddp import SddpConfig
    from .system import agent_partition

    system = _load_system(args)
    agent_id = args.agent or sorted(a.id for a in system.agents)[0]
    scen = generate_scenarios(system.inflow_model, system.horizon, args.seed)
    cd, _ = run_centralized(system, scen, SddpConfig(seed=args.seed))
    chain = build_markov_chain(cd.spot, args.clusters, args.seed,
                               system.horizon.block_weights)
    view, _ = agent_partition(system, agent_id)
    cfg = SddpConfig(seed=args.seed)
    pol = MaxRevPolicy(system, view, scen, chain, cd.spot, cfg)
    res = run_policy(pol, cfg)
    T, S = res.revenue.shape
    _write_csv(
        os.path.join(outdir, "revenue.csv"),
        ["stage", "scenario", "revenue"],
        [(t, s, repr(float(res.revenue[t, s]))) for t in range(T) for s in range(S)],
    )
    _write_csv(
        os.path.join(outdir, "cuts.csv"),
        ["stage", "cluster", "intercept", "coefficients"],
        [(r[0], r[1], repr(float(r[2])), ";".join(repr(float(x)) for x in r[3:]))
         for r in res.fvf.export_rows()],
    )
    print(f"maxrev[{agent_id}]: expected revenue "
          f"{res.revenue.sum(axis=0).mean():.6g} converged={res.report.converged}")
    return EXIT_OK if res.report.converged else EXIT_NO_CONVERGENCE


def cmd_equilibrium(args, outdir) -> int:
    from .equilibrium import (EquilibriumConfig, run_equilibrium,
                              write_convergence_csv, write_revenue_csv,
                              write_spot_comparison_csv)

    system = _load_system(args)
    cfg = EquilibriumConfig(
        num_clusters=args.clusters,
        seed=args.seed,
        max_rounds=args.max_rounds,
        deficit_cost=None if args.deficit_cost is None else float(args.deficit_cost),
    )
    rep = run_equilibrium(system, cfg)
    write_convergence_csv(rep, os.path.join(outdir, "convergence.csv"))
    write_spot_comparison_csv(rep, os.path.join(outdir, "spot_cd_vs_ne.csv"))
    write_revenue_csv(rep, os.path.join(outdir, "revenue_by_agent.csv"))
    print(f"equilibrium: converged={rep.converged} rounds={rep.rounds}")
    return EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE


def cmd_gen_case(args, outdir) -> int:
    from . import cases

    profile = args.profile or "toy"
    builders = {
        "toy": cases.toy_two_stage,
        "duopoly": cases.duopoly,
        "panama-like": lambda: cases.panama_like(
            stages=48, scenarios=60, openings=20, seed=args.seed or 20
        ),
    }
    system = builders[profile]()
    path = os.path.join(outdir, f"{profile}.json")
    with open(path, "w") as fh:
        json.dump(system.to_dict(), fh, indent=2)
    print(f"gen-case: wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.time()
    try:
        os.makedirs(args.out, exist_ok=True)
        handler = {
            "dispatch": cmd_dispatch,
            "maxrev": cmd_maxrev,
            "optbid": cmd_maxrev,  # bids are a maxrev byproduct; kept as alias
            "equilibrium": cmd_equilibrium,
            "gen-case": cmd_gen_case,
        }[args.pipeline]
        status = handler(args, args.out)
        _manifest(args, args.out, t0, {"exit_status": status})
        return status
    except FileNotFoundError as exc:
        print(f"error: cannot read {exc.filename or exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # surface a one-line diagnostic, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
