"""Scenario construction: unrestrained block, balloon angioplasty, simplified stent.

Parameter defaults are the published block values with the artery-specific
per-layer overrides applied on top; every entry can be overridden from a
configuration file. Initial conditions are the homeostatic wall state
(no growth factors, equilibrium ECM and SMC density, zero displacement).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .constitutive import ANISOTROPIC, ISOTROPIC, StructuralParams
from .elements import FluxPatchParams
from .kinetics import SpeciesParams
from .mesh import Mesh, SurfacePatch, build_artery_quadrant, build_block, fiber_frames
from .profiles import InfluxProfile
from .solver import FemModel, Probe, State, TimeSteppingConfig

# Block model parameters (homogeneous wall).
BLOCK_SPECIES = dict(
    D_P=0.1, eta_P=1.0e-6, eps_P=1.0e-7, c_P_th=1.0e-15, l_P=1.0e16,
    D_T=0.1, eps_T=1.0e-7, c_T_th=1.0e-16, l_T=1.0e16,
    eta_E=1.0e-7, eps_E=1.0e21, c_E_eq=7.0e-9, c_E_th=7.0007e-9,
    chi_C=1.0e11, chi_H=1.0e6, eta_S=1.0e14, rho_S_eq=3.7e5,
)
BLOCK_STRUCTURAL = dict(
    mu=0.02, lam=10.0, k1_bar=0.112, k2=20.61, kappa=0.1, alpha_deg=41.0,
    c_E_eq=7.0e-9, rho_S_eq=3.7e5,
)

# Balloon-angioplasty overrides per layer (everything else from the block set).
ARTERY_SPECIES = {
    "media": dict(D_P=0.01, eps_E=3.0e23, chi_C=1.0e11, chi_H=1.0e6, eta_S=1.0e13),
    "adventitia": dict(D_P=0.005, eps_E=3.0e23, chi_C=0.0, chi_H=0.0, eta_S=0.0),
}
ARTERY_STRUCTURAL = {
    "media": dict(mu=0.02, lam=10.0, k1_bar=0.112, k2=20.61, kappa=0.24, alpha_deg=41.0),
    "adventitia": dict(mu=0.008, lam=10.0, k1_bar=0.362, k2=7.089, kappa=0.17, alpha_deg=50.1),
}

DEFAULT_Q_P_PEAK = 1.0e-19  # mol/mm^2/day
DEFAULT_Q_T_PEAK = 1.0e-18
DEFAULT_P_EN = 1.0e-6  # mm/day; small enough that the wall concentration
# is negligible against the ambient level, so the Robin flux tracks the
# prescribed influx profile.


@dataclass
class GeometryConfig:
    # block
    side_length: float = 1.0
    divisions: int = 4
    # artery / stent
    length: float = 6.0
    r_inner: float = 1.55
    media_thickness: float = 0.34
    adventitia_thickness: float = 0.32
    radial_divisions: int = 3
    circumferential_divisions: int = 20
    longitudinal_divisions: int = 36
    damage_start: float = 2.0
    damage_length: float = 3.0
    strut_width: float = 0.1


@dataclass
class OutputConfig:
    directory: str = "out"
    monitor_point: tuple | None = None
    field_interval: int = 0
    line_z: float = 3.5


@dataclass
class SimulationConfig:
    scenario: str = "block"
    growth_model: str = ISOTROPIC
    kappa: float | None = None  # overrides every layer when set
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    timestep: TimeSteppingConfig = field(default_factory=TimeSteppingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    species_overrides: dict = field(default_factory=dict)  # layer -> {name: value}
    structural_overrides: dict = field(default_factory=dict)
    p_en: float = DEFAULT_P_EN
    q_P_peak: float = DEFAULT_Q_P_PEAK
    q_T_peak: float = DEFAULT_Q_T_PEAK
    profile_times: tuple = (0.0, 30.0, 100.0, 370.0)
    profile_shape: tuple = (0.0, 1.0, 1.0, 0.0)
    initial_overrides: dict = field(default_factory=dict)  # field -> value

    def validate(self):
        if self.scenario not in ("block", "angioplasty", "stent"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.growth_model not in (ISOTROPIC, ANISOTROPIC):
            raise ValueError(f"unknown growth model {self.growth_model!r}")
        if self.growth_model == ANISOTROPIC and self.kappa is not None and self.kappa > 1e-12:
            raise ValueError(
                "anisotropic (stress-free) growth requires perfectly aligned fibers; "
                "set kappa = 0 or use the isotropic matrix growth model"
            )
        self.timestep.validate()
        return self


@dataclass
class Scenario:
    name: str
    mesh: Mesh
    model: FemModel
    initial_state: State
    probe: Probe
    config: SimulationConfig


def _merge(base: dict, *updates: dict) -> dict:
    out = dict(base)
    for up in updates:
        out.update(up)
    return out


def _species_params(cfg: SimulationConfig, layer: str, table_extra: dict) -> SpeciesParams:
    vals = _merge(BLOCK_SPECIES, table_extra,
                  cfg.species_overrides.get("all", {}), cfg.species_overrides.get(layer, {}))
    return SpeciesParams(**vals).validate()


def _structural_params(cfg: SimulationConfig, layer: str, table_extra: dict) -> StructuralParams:
    vals = _merge(BLOCK_STRUCTURAL, table_extra,
                  cfg.structural_overrides.get("all", {}),
                  cfg.structural_overrides.get(layer, {}))
    vals["growth_model"] = cfg.growth_model
    if cfg.kappa is not None:
        vals["kappa"] = cfg.kappa
    if cfg.growth_model == ANISOTROPIC:
        if cfg.kappa is None:
            vals["kappa"] = 0.0
        elif cfg.kappa > 1e-12:
            raise ValueError("anisotropic growth requires kappa = 0")
    return StructuralParams(**vals).validate()


def _flux_params(cfg: SimulationConfig) -> FluxPatchParams:
    times = np.asarray(cfg.profile_times)
    shape = np.asarray(cfg.profile_shape)
    profile = InfluxProfile(times=times, q_P=cfg.q_P_peak * shape, q_T=cfg.q_T_peak * shape)
    amb_P, amb_T = profile.ambient(cfg.p_en)
    return FluxPatchParams(p_en=cfg.p_en, ambient_P=amb_P, ambient_T=amb_T)


def _initial_state(cfg: SimulationConfig, n_nodes: int, kp: SpeciesParams) -> State:
    state = State.homeostatic(n_nodes, kp.c_E_eq, kp.rho_S_eq)
    names = {"c_P": "c0_P", "c_T": "c0_T", "c_E": "c0_E", "rho_S": "rho0_S"}
    for key, value in cfg.initial_overrides.items():
        if key not in names:
            raise ValueError(f"unknown initial-condition field {key!r}")
        getattr(state, names[key])[:] = value
    return state


def _nearest_node(mesh: Mesh, point) -> int:
    return int(np.argmin(np.linalg.norm(mesh.nodes - np.asarray(point), axis=1)))


def build_scenario(cfg: SimulationConfig) -> Scenario:
    cfg.validate()
    if cfg.scenario == "block":
        return _build_block_scenario(cfg)
    if cfg.scenario == "angioplasty":
        return _build_artery_scenario(cfg, stent=False)
    return _build_artery_scenario(cfg, stent=True)


def _build_block_scenario(cfg: SimulationConfig) -> Scenario:
    g = cfg.geometry
    mesh = build_block(g.side_length, g.divisions)
    kp = _species_params(cfg, "homogeneous", {})
    st = _structural_params(cfg, "homogeneous", {})
    fibers = fiber_frames(mesh, {"homogeneous": st.alpha_deg})
    model = FemModel(mesh, {"homogeneous": st}, {"homogeneous": kp}, fibers,
                     flux_params=_flux_params(cfg))
    # symmetry: no normal displacement on the three back faces
    model.fix_displacement("xmin", 0)
    model.fix_displacement("ymin", 1)
    model.fix_displacement("zmin", 2)
    point = cfg.output.monitor_point or (g.side_length, g.side_length, g.side_length)
    probe = Probe(monitor_node=_nearest_node(mesh, point),
                  field_interval=cfg.output.field_interval)
    return Scenario("block", mesh, model, _initial_state(cfg, mesh.n_nodes, kp), probe, cfg)


def _build_artery_scenario(cfg: SimulationConfig, stent: bool) -> Scenario:
    g = cfg.geometry
    r_mo = g.r_inner + g.media_thickness
    r_o = r_mo + g.adventitia_thickness
    length = g.length if not stent else min(g.length, 3.0)
    window = (0.0, length) if stent else (g.damage_start, g.damage_length)
    mesh = build_artery_quadrant(
        length, g.r_inner, r_mo, r_o,
        divisions=(g.radial_divisions, g.circumferential_divisions, g.longitudinal_divisions),
        damage_window=window,
    )

    species = {layer: _species_params(cfg, layer, ARTERY_SPECIES[layer])
               for layer in mesh.layer_names}
    structural = {layer: _structural_params(cfg, layer, ARTERY_STRUCTURAL[layer])
                  for layer in mesh.layer_names}
    if stent:
        # idealized stent runs use the stress-free anisotropic growth theory
        for layer in structural:
            structural[layer] = dataclasses.replace(
                structural[layer], growth_model=ANISOTROPIC, kappa=0.0)

    if stent:
        flux = mesh.surface_patches["lumen"]
        zc = mesh.nodes[flux.quads][:, :, 2].mean(axis=1)
        outside = np.abs(zc - length / 2.0) > g.strut_width / 2.0
        mesh.surface_patches["flux"] = SurfacePatch(
            quads=flux.quads[outside], parent_elements=flux.parent_elements[outside])
        strut_nodes = mesh.node_sets["lumen"][
            np.abs(mesh.nodes[mesh.node_sets["lumen"], 2] - length / 2.0) <= g.strut_width / 2.0
        ]
        mesh.node_sets["strut"] = strut_nodes

    fibers = fiber_frames(mesh, {l: structural[l].alpha_deg for l in mesh.layer_names})
    model = FemModel(mesh, structural, species, fibers, flux_params=_flux_params(cfg))
    model.fix_displacement("theta0", 1)  # y = 0 symmetry plane
    model.fix_displacement("theta90", 0)  # x = 0 symmetry plane
    model.fix_displacement("zmin", 2)
    model.fix_displacement("zmax", 2)
    if stent:
        model.fix_field("u", "strut")

    kp0 = species[mesh.layer_names[0]]
    mid_z = length / 2.0 if stent else cfg.output.line_z
    point = cfg.output.monitor_point
    if point is None:
        ang = np.pi / 4.0
        point = (g.r_inner * np.cos(ang), g.r_inner * np.sin(ang), mid_z)
    lumen = mesh.node_sets["lumen"]
    zs = np.unique(mesh.nodes[lumen, 2])
    z_line = zs[np.argmin(np.abs(zs - mid_z))]
    line_nodes = lumen[np.abs(mesh.nodes[lumen, 2] - z_line) < 1e-9]
    probe = Probe(monitor_node=_nearest_node(mesh, point), line_nodes=line_nodes,
                  field_interval=cfg.output.field_interval)
    name = "stent" if stent else "angioplasty"
    return Scenario(name, mesh, model, _initial_state(cfg, mesh.n_nodes, kp0), probe, cfg)
