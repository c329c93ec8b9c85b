"""Command-line entry point: run, sweep, and mesh-dump subcommands.

Exit codes: 0 success, 2 configuration error, 3 simulation failure,
4 output/filesystem error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .configio import ConfigError, load_config
from .output import dump_state, ensure_dir, write_mesh
from .scenarios import build_scenario
from .simulate import run_scenario, sweep
from .solver import SimulationError


def _add_common(p):
    p.add_argument("config", help="configuration file (key = value sections)")
    p.add_argument("--dt", type=float, help="override time step [days]")
    p.add_argument("--t-end", type=float, help="override end time [days]")
    p.add_argument("--scheme", choices=("monolithic", "staggered"), help="override scheme")
    p.add_argument("--output-dir", help="override output directory")


def _load(args):
    cfg = load_config(args.config)
    if args.dt is not None:
        cfg.timestep.dt = args.dt
    if args.t_end is not None:
        cfg.timestep.t_end = args.t_end
    if args.scheme is not None:
        cfg.timestep.scheme = args.scheme
    if args.output_dir is not None:
        cfg.output.directory = args.output_dir
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="restenofem",
        description="Finite-element simulation of neointimal growth in arterial walls",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write its time series")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="re-run the scenario for several parameter values")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="dotted parameter path, e.g. kappa")
    p_sweep.add_argument("--values", required=True, help="comma-separated list of values")

    p_mesh = sub.add_parser("mesh-dump", help="write the scenario mesh as legacy VTK")
    p_mesh.add_argument("config")
    p_mesh.add_argument("--output", help="output file (default: <scenario>_mesh.vtk)")

    args = parser.parse_args(argv)
    try:
        if args.command == "mesh-dump":
            cfg = load_config(args.config)
            scenario = build_scenario(cfg)
            path = args.output or f"{scenario.name}_mesh.vtk"
            write_mesh(scenario.mesh, path)
            print(f"mesh written to {path}")
            return 0
        cfg = _load(args)
        if args.command == "run":
            scenario, result = run_scenario(cfg, write_outputs=True)
            last = result.records[-1]
            print(
                f"{scenario.name}: {len(result.records)} records to t={last.t:g} days, "
                f"Jg={last.Jg:.4f}, wall {result.wall_time:.1f}s, "
                f"{len(result.events)} diagnostic events"
            )
            if result.events:
                for step, label in result.events[:10]:
                    print(f"  step {step}: {label}")
            return 0
        values = [float(v) for v in args.values.split(",")]
        results, times, traj = sweep(cfg, args.param, values, write_outputs=True)
        print(f"swept {args.param} over {values}: final Jg per value:")
        for j, v in enumerate(values):
            print(f"  {args.param}={v:g}: Jg(t_end)={traj[-1, j]:.5f}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation failed at t={exc.t}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
