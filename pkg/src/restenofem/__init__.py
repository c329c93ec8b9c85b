"""Lagrangian finite-element simulation of neointimal growth in arterial walls.

Four wall species (PDGF, TGF-beta, ECM, SMC density) evolve by
advection-reaction-diffusion in a growing hyperelastic solid; growth follows
the local SMC density. Monolithic (fully implicit) and staggered
(semi-implicit) backward-Euler solution strategies are provided, together
with a deformation-dependent growth-factor flux boundary.
"""

from .constitutive import (
    ANISOTROPIC,
    ISOTROPIC,
    GrowthState,
    StressTangent,
    StructuralParams,
    fiber_strain,
    free_energy,
    growth_direction,
    growth_from_density,
    stress_and_tangent,
    structural_tensor,
)
from .elements import (
    ElementContribution,
    FluxPatchParams,
    HexBatch,
    InvertedElementError,
    QuadRule,
    SurfaceFluxBatch,
    hex_quadrature,
    hex_residual_tangent,
    quad_quadrature,
    shape_hex8,
    shape_quad4,
)
from .kinetics import SpeciesParams, SpeciesPointState, ecm_closed_form, f_P, f_T, gf_diffusive_flux
from .mesh import Mesh, SurfacePatch, build_artery_quadrant, build_block, fiber_frame, fiber_frames
from .output import (
    OutputRecord,
    dump_state,
    neointimal_thickness,
    read_timeseries,
    write_fields,
    write_timeseries,
)
from .profiles import InfluxProfile, PiecewiseLinear
from .scenarios import Scenario, SimulationConfig, build_scenario
from .simulate import run_scenario, set_swept_parameter, sweep
from .solver import (
    FemModel,
    Probe,
    RunResult,
    SimulationError,
    SparseSystem,
    State,
    StepFailure,
    TimeSteppingConfig,
    eliminate_dirichlet,
    run,
    step_monolithic,
    step_staggered,
)
from .configio import ConfigError, load_config, parse_config

__version__ = "0.1.0"
