"""Plain-text configuration parsing.

Grammar: INI-style sections of `key = value` lines, `#` comments. Numeric
values may carry a unit suffix which, when present, must match the unit
expected for that key (e.g. `D_P = 0.1 mm^2/day`). Layer-specific parameter
sections use a dotted suffix: `[species.media]`, `[structural.adventitia]`.
Unknown sections or keys, malformed values, and unit mismatches raise
ConfigError with the offending line number.
"""

from __future__ import annotations

import dataclasses

from .constitutive import StructuralParams
from .kinetics import SpeciesParams
from .scenarios import GeometryConfig, OutputConfig, SimulationConfig
from .solver import TimeSteppingConfig


class ConfigError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


_SPECIES_UNITS = {
    "D_P": "mm^2/day", "D_T": "mm^2/day",
    "eta_P": "mm^3/cell/day", "eps_P": "mm^3/cell/day", "eps_T": "mm^3/cell/day",
    "eta_E": "mol/cell/day", "eps_E": "mm^3/mol/day", "eta_S": "mm^3/cell/day",
    "chi_C": "mm^5/mol/day", "chi_H": "mm^5/mol/day",
    "c_P_th": "mol/mm^3", "c_T_th": "mol/mm^3", "c_E_eq": "mol/mm^3", "c_E_th": "mol/mm^3",
    "l_P": "mm^3/mol", "l_T": "mm^3/mol",
    "rho_S_eq": "cells/mm^3",
}

_STRUCTURAL_UNITS = {
    "mu": "MPa", "lam": "MPa", "k1_bar": "MPa", "k2": "-", "kappa": "-",
    "alpha_deg": "deg", "c_E_eq": "mol/mm^3", "rho_S_eq": "cells/mm^3",
}

_GEOMETRY_UNITS = {
    "side_length": "mm", "length": "mm", "r_inner": "mm", "media_thickness": "mm",
    "adventitia_thickness": "mm", "damage_start": "mm", "damage_length": "mm",
    "strut_width": "mm",
}
_GEOMETRY_INTS = {
    "divisions", "radial_divisions", "circumferential_divisions", "longitudinal_divisions",
}

_TIME_FLOATS = {"dt": "day", "t_end": "day", "newton_tol_rel": "-", "newton_tol_abs": "-"}
_TIME_INTS = {"max_newton_iters", "max_step_halvings"}
_TIME_STRINGS = {"scheme": ("monolithic", "staggered"), "linear_solver": ("direct", "iterative")}
_TIME_BOOLS = {"freeze_mechanics"}

_FLUX_UNITS = {"p_en": "mm/day", "q_P_peak": "mol/mm^2/day", "q_T_peak": "mol/mm^2/day"}

_INITIAL_UNITS = {"c_P": "mol/mm^3", "c_T": "mol/mm^3", "c_E": "mol/mm^3",
                  "rho_S": "cells/mm^3"}

_SCENARIO_KINDS = ("block", "angioplasty", "stent")


def _parse_number(line_no, key, raw, expected_unit):
    parts = raw.split(None, 1)
    try:
        value = float(parts[0])
    except (ValueError, IndexError):
        raise ConfigError(line_no, f"{key}: expected a number, got {raw!r}") from None
    if len(parts) > 1:
        unit = parts[1].strip()
        if expected_unit is None:
            raise ConfigError(line_no, f"{key} takes no unit, got {unit!r}")
        if unit != expected_unit:
            raise ConfigError(
                line_no, f"{key}: unit mismatch, expected {expected_unit!r}, got {unit!r}"
            )
    return value


def _parse_int(line_no, key, raw):
    try:
        return int(raw.split()[0])
    except (ValueError, IndexError):
        raise ConfigError(line_no, f"{key}: expected an integer, got {raw!r}") from None


def _parse_tuple(line_no, key, raw):
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(line_no, f"{key}: expected a comma-separated number list") from None


def parse_config(text: str) -> SimulationConfig:
    """Build a fully resolved SimulationConfig; published defaults fill gaps."""
    cfg = SimulationConfig()
    section = None
    seen_kind = False
    kind_required_line = 0

    species_fields = {f.name for f in dataclasses.fields(SpeciesParams)}
    structural_fields = {f.name for f in dataclasses.fields(StructuralParams)} - {"growth_model"}
    geometry_fields = {f.name for f in dataclasses.fields(GeometryConfig)}
    time_fields = {f.name for f in dataclasses.fields(TimeSteppingConfig)}
    output_fields = {f.name for f in dataclasses.fields(OutputConfig)}

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(line_no, f"malformed section header {line!r}")
            section = line[1:-1].strip()
            base = section.split(".", 1)[0]
            if base not in ("scenario", "geometry", "time", "species", "structural",
                            "flux", "initial", "output"):
                raise ConfigError(line_no, f"unknown section [{section}]")
            if "." in section and base not in ("species", "structural"):
                raise ConfigError(line_no, f"section [{base}] takes no layer suffix")
            continue
        if "=" not in line:
            raise ConfigError(line_no, f"expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(line_no, "key outside of any [section]")
        key, _, raw = (tok.strip() for tok in line.partition("="))

        base, _, layer = section.partition(".")
        if base == "scenario":
            if key == "kind":
                if raw not in _SCENARIO_KINDS:
                    raise ConfigError(line_no, f"unknown scenario kind {raw!r}")
                cfg.scenario = raw
                seen_kind = True
            elif key == "growth_model":
                if raw not in ("isotropic", "anisotropic"):
                    raise ConfigError(line_no, f"unknown growth model {raw!r}")
                cfg.growth_model = raw
            elif key == "kappa":
                cfg.kappa = _parse_number(line_no, key, raw, "-")
            else:
                raise ConfigError(line_no, f"unknown key {key!r} in [scenario]")
        elif base == "geometry":
            if key in _GEOMETRY_INTS:
                setattr(cfg.geometry, key, _parse_int(line_no, key, raw))
            elif key in geometry_fields:
                setattr(cfg.geometry, key,
                        _parse_number(line_no, key, raw, _GEOMETRY_UNITS.get(key)))
            else:
                raise ConfigError(line_no, f"unknown key {key!r} in [geometry]")
        elif base == "time":
            if key in _TIME_STRINGS:
                if raw not in _TIME_STRINGS[key]:
                    raise ConfigError(line_no, f"{key}: expected one of {_TIME_STRINGS[key]}")
                setattr(cfg.timestep, key, raw)
            elif key in _TIME_INTS:
                setattr(cfg.timestep, key, _parse_int(line_no, key, raw))
            elif key in _TIME_BOOLS:
                setattr(cfg.timestep, key, raw.lower() in ("1", "true", "yes", "on"))
            elif key in _TIME_FLOATS and key in time_fields:
                unit = _TIME_FLOATS[key]
                setattr(cfg.timestep, key,
                        _parse_number(line_no, key, raw, None if unit == "-" else unit))
            else:
                raise ConfigError(line_no, f"unknown key {key!r} in [time]")
        elif base == "species":
            if key not in species_fields:
                raise ConfigError(line_no, f"unknown species parameter {key!r}")
            value = _parse_number(line_no, key, raw, _SPECIES_UNITS.get(key))
            cfg.species_overrides.setdefault(layer or "all", {})[key] = value
        elif base == "structural":
            if key not in structural_fields:
                raise ConfigError(line_no, f"unknown structural parameter {key!r}")
            value = _parse_number(line_no, key, raw, _STRUCTURAL_UNITS.get(key))
            cfg.structural_overrides.setdefault(layer or "all", {})[key] = value
        elif base == "flux":
            if key in _FLUX_UNITS:
                setattr(cfg, key, _parse_number(line_no, key, raw, _FLUX_UNITS[key]))
            elif key == "profile_times":
                cfg.profile_times = _parse_tuple(line_no, key, raw)
            elif key == "profile_shape":
                cfg.profile_shape = _parse_tuple(line_no, key, raw)
            else:
                raise ConfigError(line_no, f"unknown key {key!r} in [flux]")
        elif base == "initial":
            if key not in _INITIAL_UNITS:
                raise ConfigError(line_no, f"unknown initial-condition field {key!r}")
            cfg.initial_overrides[key] = _parse_number(line_no, key, raw, _INITIAL_UNITS[key])
        elif base == "output":
            if key == "directory":
                cfg.output.directory = raw
            elif key == "monitor_point":
                cfg.output.monitor_point = _parse_tuple(line_no, key, raw)
            elif key == "field_interval":
                cfg.output.field_interval = _parse_int(line_no, key, raw)
            elif key == "line_z":
                cfg.output.line_z = _parse_number(line_no, key, raw, "mm")
            elif key in output_fields:
                setattr(cfg.output, key, raw)
            else:
                raise ConfigError(line_no, f"unknown key {key!r} in [output]")
        if not seen_kind:
            kind_required_line = line_no

    if not seen_kind:
        raise ConfigError(kind_required_line or 1,
                          "missing scenario: a [scenario] section with 'kind = ...' is required")
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(0, str(exc)) from None
    return cfg


def load_config(path) -> SimulationConfig:
    with open(path) as fh:
        return parse_config(fh.read())
