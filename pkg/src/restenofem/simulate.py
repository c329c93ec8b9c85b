"""High-level drivers: run a configured scenario, or sweep one parameter."""

from __future__ import annotations

import copy
import os

import numpy as np

from .output import dump_state, ensure_dir, write_timeseries
from .scenarios import Scenario, SimulationConfig, build_scenario
from .solver import RunResult, run


def run_scenario(cfg: SimulationConfig, write_outputs: bool = False,
                 output_dir: str | None = None):
    """Build and march one scenario; optionally write CSV and field dumps."""
    scenario = build_scenario(cfg)
    result = run(scenario.model, scenario.initial_state, cfg.timestep, scenario.probe)
    if write_outputs:
        out = ensure_dir(output_dir or cfg.output.directory)
        write_timeseries(result.records, os.path.join(out, f"{scenario.name}_timeseries.csv"))
        for rec in result.records:
            if rec.state is not None:
                dump_state(scenario.model, rec.state,
                           os.path.join(out, f"{scenario.name}_fields_{rec.t:07.2f}.vtk"))
    return scenario, result


def set_swept_parameter(cfg: SimulationConfig, name: str, value):
    """Resolve a dotted parameter path into the configuration.

    Accepted forms: `kappa`, `growth_model`, `time.dt`, `flux.q_P_peak`,
    `species.<param>`, `species.<layer>.<param>`, `structural.<param>`,
    `structural.<layer>.<param>`, `geometry.<param>`.
    """
    parts = name.split(".")
    head = parts[0]
    if name == "kappa":
        cfg.kappa = float(value)
    elif name == "growth_model":
        cfg.growth_model = str(value)
    elif head in ("species", "structural"):
        target = cfg.species_overrides if head == "species" else cfg.structural_overrides
        if len(parts) == 2:
            target.setdefault("all", {})[parts[1]] = float(value)
        elif len(parts) == 3:
            target.setdefault(parts[1], {})[parts[2]] = float(value)
        else:
            raise ValueError(f"cannot resolve parameter {name!r}")
    elif head == "time" and len(parts) == 2:
        setattr(cfg.timestep, parts[1], type(getattr(cfg.timestep, parts[1]))(value))
    elif head == "geometry" and len(parts) == 2:
        setattr(cfg.geometry, parts[1], type(getattr(cfg.geometry, parts[1]))(value))
    elif head == "flux" and len(parts) == 2 and parts[1] in ("p_en", "q_P_peak", "q_T_peak"):
        setattr(cfg, parts[1], float(value))
    else:
        raise ValueError(f"cannot resolve parameter {name!r}")
    return cfg


def sweep(base_cfg: SimulationConfig, param: str, values, write_outputs: bool = False,
          output_dir: str | None = None):
    """Run the scenario once per parameter value.

    Returns (results, times, trajectories) where trajectories holds the
    monitor-point growth volume change Jg of each run interpolated onto the
    base time grid, one column per swept value.
    """
    results: dict = {}
    base_times = None
    columns = []
    for value in values:
        cfg = copy.deepcopy(base_cfg)
        set_swept_parameter(cfg, param, value)
        scenario, result = run_scenario(cfg)
        results[value] = (scenario, result)
        t = result.times
        jg = result.series(lambda r: r.Jg)
        if base_times is None:
            base_times = t
        columns.append(np.interp(base_times, t, jg))
    trajectories = np.column_stack(columns) if columns else np.empty((0, 0))
    if write_outputs:
        out = ensure_dir(output_dir or base_cfg.output.directory)
        path = os.path.join(out, f"sweep_{param.replace('.', '_')}.csv")
        with open(path, "w") as fh:
            fh.write("t," + ",".join(f"Jg[{param}={v}]" for v in values) + "\n")
            for i, t in enumerate(base_times):
                row = ",".join(format(x, ".17g") for x in trajectories[i])
                fh.write(f"{format(t, '.17g')},{row}\n")
    return results, base_times, trajectories
