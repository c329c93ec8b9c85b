"""Time marching: monolithic Newton-Raphson and staggered backward Euler.

Degrees of freedom are interleaved per node as
(c0_P, c0_T, c0_E, rho0_S, u_x, u_y, u_z). The monolithic scheme solves the
full unsymmetric coupled system; the staggered scheme performs one symmetric
linear solve per species (fields lagged, geometry at t_n) followed by a
Newton loop on the displacement block.

Species dofs are nondimensionalized by their characteristic magnitudes and
residuals by field scales before norms and linear solves are taken, which
tames the ~20 decades of spread between concentration and density units.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import HexBatch, InvertedElementError, SurfaceFluxBatch, SPECIES_FIELDS
from .mesh import Mesh

FIELD_OFFSET = {"P": 0, "T": 1, "E": 2, "S": 3}
NDOF_PER_NODE = 7

# Post-step negativity beyond this fraction of the field scale raises a
# diagnostic event (values are never clipped inside residual evaluation).
NEGATIVITY_TOL = 1.0e-3


@dataclass
class State:
    """Nodal solution fields at one time instant."""

    t: float
    c0_P: np.ndarray
    c0_T: np.ndarray
    c0_E: np.ndarray
    rho0_S: np.ndarray
    u: np.ndarray

    def fields(self) -> dict:
        return {"P": self.c0_P, "T": self.c0_T, "E": self.c0_E, "S": self.rho0_S, "u": self.u}

    def copy(self) -> "State":
        return State(self.t, self.c0_P.copy(), self.c0_T.copy(), self.c0_E.copy(),
                     self.rho0_S.copy(), self.u.copy())

    @classmethod
    def homeostatic(cls, n_nodes: int, c_E_eq: float, rho_S_eq: float, t: float = 0.0) -> "State":
        """Healthy-wall initial conditions: no growth factors, equilibrium ECM/SMC."""
        return cls(
            t=t,
            c0_P=np.zeros(n_nodes),
            c0_T=np.zeros(n_nodes),
            c0_E=np.full(n_nodes, c_E_eq),
            rho0_S=np.full(n_nodes, rho_S_eq),
            u=np.zeros((n_nodes, 3)),
        )


@dataclass
class TimeSteppingConfig:
    dt: float = 1.0  # days
    t_end: float = 370.0
    scheme: str = "monolithic"  # "monolithic" | "staggered"
    newton_tol_rel: float = 1.0e-8
    # Absolute tolerance on the nondimensionalized residual (field scale per
    # node per step). The floor of ~1e-8 is set by roundoff in the stiff ECM
    # reaction, whose terms cancel to ~eps_machine of their magnitude.
    newton_tol_abs: float = 1.0e-7
    max_newton_iters: int = 25
    linear_solver: str = "direct"  # "direct" | "iterative"
    max_step_halvings: int = 3
    freeze_mechanics: bool = False
    # Staggered accuracy watchdog: each species update is recomputed with two
    # half steps (geometry frozen); if the updates disagree by more than
    # breach_tol of a field scale, the lagged coupling is no longer resolving
    # the step and an accuracy_breach event is raised.
    breach_check: bool = True
    breach_tol: float = 1.0e-3

    def validate(self):
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ValueError("dt must be positive and t_end non-negative")
        if self.newton_tol_rel <= 0.0 or self.newton_tol_abs <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.scheme not in ("monolithic", "staggered"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        return self


@dataclass
class StepDiagnostics:
    step: int
    t: float
    dt: float
    newton_iters: int
    residuals: list
    wall_time: float
    events: list = field(default_factory=list)
    species_solves: int = 0


class StepFailure(RuntimeError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, msg, t, diagnostics=None):
        super().__init__(msg)
        self.t = t
        self.diagnostics = diagnostics


@dataclass
class SparseSystem:
    """Assembled linear system with Dirichlet markers.

    matrix rows/columns of fixed dofs are zeroed with a unit diagonal; the
    right-hand side is zeroed there, so solution increments vanish on the
    constrained set. `symmetric` is only set for staggered species blocks.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed: np.ndarray  # bool mask
    symmetric: bool = False

    def solve(self, method="direct"):
        if method == "iterative":
            if self.symmetric:
                x, info = spla.cg(self.matrix, self.rhs, rtol=1e-12, atol=0.0)
            else:
                ilu = spla.spilu(self.matrix.tocsc(), drop_tol=1e-8, fill_factor=20)
                M = spla.LinearOperator(self.matrix.shape, ilu.solve)
                x, info = spla.gmres(self.matrix, self.rhs, M=M, rtol=1e-12, atol=0.0)
            if info != 0:
                raise StepFailure(f"iterative linear solve failed (info={info})")
            return x
        return spla.spsolve(self.matrix.tocsc(), self.rhs)


def eliminate_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray, fixed: np.ndarray):
    """Reduced system on the free dofs (row/column elimination)."""
    free = np.flatnonzero(~fixed)
    m = matrix.tocsr()[free][:, free]
    return m, rhs[free], free


class FemModel:
    """Mesh + parameters + dof bookkeeping for one simulation setup."""

    def __init__(self, mesh: Mesh, structural_by_layer, species_by_layer, fibers,
                 flux_params=None, flux_patch="flux", body_force=None):
        self.mesh = mesh
        self.structural_by_layer = structural_by_layer
        self.species_by_layer = species_by_layer
        self.flux = flux_params
        self.hex = HexBatch(mesh.nodes, mesh.elements, mesh.layer_tags, mesh.layer_names,
                            fibers, structural_by_layer, species_by_layer)
        self.n_nodes = mesh.n_nodes
        self.n_dofs = NDOF_PER_NODE * self.n_nodes

        self.surf = None
        if flux_params is not None:
            patch = mesh.surface_patches[flux_patch]
            self.surf = SurfaceFluxBatch(mesh.nodes, patch.quads)
            self._patch_quads = patch.quads

        conn = mesh.elements
        self._dofs = {f: NDOF_PER_NODE * conn + FIELD_OFFSET[f] for f in SPECIES_FIELDS}
        du = (NDOF_PER_NODE * conn)[:, :, None] + 4 + np.arange(3)[None, None, :]
        self._dofs["u"] = du.reshape(conn.shape[0], 24)

        self.fixed = np.zeros(self.n_dofs, dtype=bool)
        self._volume = float(np.sum(self.hex.wdet))

        # characteristic magnitudes used for nondimensionalization
        kp = species_by_layer[mesh.layer_names[0]]
        st = structural_by_layer[mesh.layer_names[0]]
        self.field_scale = {"P": kp.c_P_th, "T": kp.c_T_th, "E": kp.c_E_eq, "S": kp.rho_S_eq,
                            "u": 1.0}
        self._stress_scale = st.mu + st.lam
        self._col_scale = np.empty(self.n_dofs)
        for f, off in FIELD_OFFSET.items():
            self._col_scale[off::NDOF_PER_NODE] = self.field_scale[f]
        for i in range(3):
            self._col_scale[4 + i::NDOF_PER_NODE] = self.field_scale["u"]

    # -- constraints -----------------------------------------------------------

    def fix_displacement(self, node_set: str, component: int):
        nodes = self.mesh.node_sets[node_set]
        self.fixed[NDOF_PER_NODE * nodes + 4 + component] = True

    def fix_field(self, fname: str, node_set: str):
        nodes = self.mesh.node_sets[node_set]
        if fname == "u":
            for i in range(3):
                self.fixed[NDOF_PER_NODE * nodes + 4 + i] = True
        else:
            self.fixed[NDOF_PER_NODE * nodes + FIELD_OFFSET[fname]] = True

    def fixed_mask_for(self, fname: str) -> np.ndarray:
        if fname == "u":
            m = np.zeros((self.n_nodes, 3), dtype=bool)
            for i in range(3):
                m[:, i] = self.fixed[4 + i::NDOF_PER_NODE]
            return m.ravel()
        return self.fixed[FIELD_OFFSET[fname]::NDOF_PER_NODE]

    # -- residual scales -------------------------------------------------------

    def _row_scale(self, dt: float) -> np.ndarray:
        v_node = self._volume / self.n_nodes
        rs = np.empty(self.n_dofs)
        for f, off in FIELD_OFFSET.items():
            rs[off::NDOF_PER_NODE] = self.field_scale[f] * v_node / dt
        r_u = self._stress_scale * v_node ** (2.0 / 3.0)
        for i in range(3):
            rs[4 + i::NDOF_PER_NODE] = r_u
        return rs

    def _species_row_scale(self, fname: str, dt: float) -> float:
        return self.field_scale[fname] * (self._volume / self.n_nodes) / dt

    # -- helpers ---------------------------------------------------------------

    def project_nodal_J(self, u: np.ndarray) -> np.ndarray:
        return self.hex.project_to_nodes(self.hex.qp_jacobian(u), self.n_nodes)

    def total_content(self, nodal: np.ndarray) -> float:
        return self.hex.integrate_nodal(nodal)

    def _surface_terms(self, fname, u, c0, t):
        """Patch residual and tangent blocks of one growth factor at time t."""
        amb = self.flux.ambient_P if fname == "P" else self.flux.ambient_T
        cbar = float(amb(t))
        up = u[self._patch_quads]
        cp = c0[self._patch_quads]
        R = self.surf.residual(up, cp, cbar, self.flux.p_en)
        Kcc = self.surf.tangent_cc(up, self.flux.p_en)
        return R, Kcc, cbar, up, cp

    # -- global assembly -------------------------------------------------------

    def assemble_monolithic(self, fields, fields_old, Jnod, dt, t_new, with_surface=True):
        """Scaled global matrix and raw residual of the fully implicit system."""
        R_blk, K_blk = self.hex.monolithic(fields, fields_old, Jnod, dt)
        resid = np.zeros(self.n_dofs)
        for f in ("P", "T", "E", "S", "u"):
            np.add.at(resid, self._dofs[f].ravel(), R_blk[f].ravel())

        rows, cols, data = [], [], []
        for (x, y), blk in K_blk.items():
            dx, dy = self._dofs[x], self._dofs[y]
            rows.append(np.broadcast_to(dx[:, :, None], blk.shape).ravel())
            cols.append(np.broadcast_to(dy[:, None, :], blk.shape).ravel())
            data.append(blk.ravel())

        if with_surface and self.surf is not None:
            q = self._patch_quads
            for f in ("P", "T"):
                Rp, Kcc, cbar, up, cp = self._surface_terms(f, fields["u"], fields[f], t_new)
                dq = NDOF_PER_NODE * q + FIELD_OFFSET[f]
                np.add.at(resid, dq.ravel(), Rp.ravel())
                rows.append(np.broadcast_to(dq[:, :, None], Kcc.shape).ravel())
                cols.append(np.broadcast_to(dq[:, None, :], Kcc.shape).ravel())
                data.append(Kcc.ravel())
                Kcu = self.surf.tangent_cu(up, cp, cbar, self.flux.p_en)
                duq = (NDOF_PER_NODE * q)[:, :, None] + 4 + np.arange(3)[None, None, :]
                duq = duq.reshape(q.shape[0], 12)
                rows.append(np.broadcast_to(dq[:, :, None], Kcu.shape).ravel())
                cols.append(np.broadcast_to(duq[:, None, :], Kcu.shape).ravel())
                data.append(Kcu.ravel())

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)

        rs = self._row_scale(dt)
        keep = ~self.fixed
        data = data * keep[rows] * keep[cols]
        data = data / rs[rows] * self._col_scale[cols]
        fixed_idx = np.flatnonzero(self.fixed)
        rows = np.concatenate([rows, fixed_idx])
        cols = np.concatenate([cols, fixed_idx])
        data = np.concatenate([data, np.ones(fixed_idx.size)])
        K = sp.coo_matrix((data, (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()
        resid[self.fixed] = 0.0
        return SparseSystem(matrix=K, rhs=-resid / rs, fixed=self.fixed.copy()), resid / rs

    def assemble_species(self, fname, own_new, fields_old, Jnod_old, dt, t_new):
        """Symmetric single-species system of the staggered scheme."""
        R_blk, K_blk = self.hex.species_semi(fname, own_new, fields_old, Jnod_old, dt)
        resid = np.zeros(self.n_nodes)
        np.add.at(resid, self.mesh.elements.ravel(), R_blk.ravel())
        conn = self.mesh.elements
        rows = [np.broadcast_to(conn[:, :, None], K_blk.shape).ravel()]
        cols = [np.broadcast_to(conn[:, None, :], K_blk.shape).ravel()]
        data = [K_blk.ravel()]
        if fname in ("P", "T") and self.surf is not None:
            Rp, Kcc, _, _, _ = self._surface_terms(fname, fields_old["u"], own_new, t_new)
            q = self._patch_quads
            np.add.at(resid, q.ravel(), Rp.ravel())
            rows.append(np.broadcast_to(q[:, :, None], Kcc.shape).ravel())
            cols.append(np.broadcast_to(q[:, None, :], Kcc.shape).ravel())
            data.append(Kcc.ravel())
        rows, cols, data = map(np.concatenate, (rows, cols, data))

        fixed = self.fixed_mask_for(fname)
        keep = ~fixed
        scale = self.field_scale[fname]
        rscale = self._species_row_scale(fname, dt)
        data = data * keep[rows] * keep[cols] * (scale / rscale)
        fixed_idx = np.flatnonzero(fixed)
        rows = np.concatenate([rows, fixed_idx])
        cols = np.concatenate([cols, fixed_idx])
        data = np.concatenate([data, np.ones(fixed_idx.size)])
        K = sp.coo_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes)).tocsr()
        resid[fixed] = 0.0
        return SparseSystem(matrix=K, rhs=-resid / rscale, fixed=fixed, symmetric=True), resid / rscale

    def assemble_mechanics(self, u, cE, S, dt):
        R_blk, K_blk = self.hex.mechanics(u, cE, S)
        nd = 3 * self.n_nodes
        resid = np.zeros(nd)
        du = (3 * self.mesh.elements)[:, :, None] + np.arange(3)[None, None, :]
        du = du.reshape(-1, 24)
        np.add.at(resid, du.ravel(), R_blk.ravel())
        rows = np.broadcast_to(du[:, :, None], K_blk.shape).ravel()
        cols = np.broadcast_to(du[:, None, :], K_blk.shape).ravel()
        data = K_blk.ravel()
        fixed = self.fixed_mask_for("u")
        keep = ~fixed
        v_node = self._volume / self.n_nodes
        rscale = self._stress_scale * v_node ** (2.0 / 3.0)
        data = data * keep[rows] * keep[cols] / rscale
        fixed_idx = np.flatnonzero(fixed)
        rows = np.concatenate([rows, fixed_idx])
        cols = np.concatenate([cols, fixed_idx])
        data = np.concatenate([data, np.ones(fixed_idx.size)])
        K = sp.coo_matrix((data, (rows, cols)), shape=(nd, nd)).tocsr()
        resid[fixed] = 0.0
        return SparseSystem(matrix=K, rhs=-resid / rscale, fixed=fixed), resid / rscale


def _unpack(model, x):
    return {
        "P": x[0::NDOF_PER_NODE],
        "T": x[1::NDOF_PER_NODE],
        "E": x[2::NDOF_PER_NODE],
        "S": x[3::NDOF_PER_NODE],
        "u": np.column_stack([x[4::NDOF_PER_NODE], x[5::NDOF_PER_NODE], x[6::NDOF_PER_NODE]]),
    }


def _pack(model, fields):
    x = np.empty(model.n_dofs)
    for f, off in FIELD_OFFSET.items():
        x[off::NDOF_PER_NODE] = fields[f]
    for i in range(3):
        x[4 + i::NDOF_PER_NODE] = fields["u"][:, i]
    return x


def step_monolithic(model: FemModel, state: State, dt: float, cfg: TimeSteppingConfig):
    """One fully implicit backward-Euler step solved by Newton-Raphson."""
    t_new = state.t + dt
    fields_old = state.fields()
    x = _pack(model, fields_old)
    residuals = []
    iters = 0
    for it in range(cfg.max_newton_iters + 1):
        fields = _unpack(model, x)
        Jnod = model.project_nodal_J(fields["u"])
        system, rhat = model.assemble_monolithic(fields, fields_old, Jnod, dt, t_new)
        rnorm = float(np.linalg.norm(rhat))
        residuals.append(rnorm)
        if not np.isfinite(rnorm):
            raise StepFailure(f"non-finite residual at t={t_new}")
        if rnorm < cfg.newton_tol_abs or (it > 0 and rnorm < cfg.newton_tol_rel * residuals[0]):
            new = State(t_new, fields["P"].copy(), fields["T"].copy(), fields["E"].copy(),
                        fields["S"].copy(), fields["u"].copy())
            return new, iters, residuals
        if it == cfg.max_newton_iters or rnorm > 1e8 * (residuals[0] + 1.0):
            break
        dx = system.solve(cfg.linear_solver)
        x = x + model._col_scale * dx
        iters += 1
    raise StepFailure(
        f"monolithic Newton did not converge at t={t_new} "
        f"(residuals {residuals[0]:.3e} -> {residuals[-1]:.3e})"
    )


def _species_pass(model: FemModel, fields_from, Jnod_old, dt, t_eval, cfg):
    """One semi-implicit update of all four species (one solve each)."""
    new = {}
    for f in SPECIES_FIELDS:
        own = fields_from[f].copy()
        system, _ = model.assemble_species(f, own, fields_from, Jnod_old, dt, t_eval)
        dx = system.solve(cfg.linear_solver)
        # columns were scaled by the field magnitude, so dx is dimensionless
        new[f] = own + model.field_scale[f] * dx
    return new


def step_staggered(model: FemModel, state: State, dt: float, cfg: TimeSteppingConfig):
    """Semi-implicit step: four symmetric species solves, then displacement Newton.

    Each species subsystem is linear in its own unknown and is updated with
    exactly one solve; species fields seen by the other equations stay at t_n,
    and the geometry seen by the species stays at t_n.
    """
    t_new = state.t + dt
    fields_old = state.fields()
    Jnod_old = model.project_nodal_J(fields_old["u"])
    new_fields = _species_pass(model, fields_old, Jnod_old, dt, t_new, cfg)
    solves = len(SPECIES_FIELDS)

    events = []
    if cfg.breach_check:
        half = _species_pass(model, fields_old, Jnod_old, 0.5 * dt, state.t + 0.5 * dt, cfg)
        half["u"] = fields_old["u"]
        two_half = _species_pass(model, half, Jnod_old, 0.5 * dt, t_new, cfg)
        for f in SPECIES_FIELDS:
            drift = np.max(np.abs(new_fields[f] - two_half[f])) / model.field_scale[f]
            if drift > cfg.breach_tol:
                events.append(f"accuracy_breach:{f}:{drift:.3e}")

    residuals = []
    iters = 0
    if cfg.freeze_mechanics:
        u = fields_old["u"].copy()
    else:
        u = fields_old["u"].copy()
        for it in range(cfg.max_newton_iters + 1):
            system, rhat = model.assemble_mechanics(u, new_fields["E"], new_fields["S"], dt)
            rnorm = float(np.linalg.norm(rhat))
            residuals.append(rnorm)
            if not np.isfinite(rnorm):
                raise StepFailure(f"non-finite mechanics residual at t={t_new}")
            if rnorm < cfg.newton_tol_abs or (
                it > 0 and rnorm < cfg.newton_tol_rel * residuals[0]
            ):
                break
            if it == cfg.max_newton_iters or rnorm > 1e8 * (residuals[0] + 1.0):
                raise StepFailure(
                    f"staggered displacement Newton did not converge at t={t_new}"
                )
            du = system.solve(cfg.linear_solver)
            u = u + du.reshape(-1, 3)
            iters += 1

    new = State(t_new, new_fields["P"], new_fields["T"], new_fields["E"], new_fields["S"], u)
    return new, iters, residuals, solves, events


@dataclass
class Probe:
    """What to sample into the per-step output records."""

    monitor_node: int = 0
    line_nodes: np.ndarray | None = None
    field_interval: int = 0  # keep a full state snapshot every k steps (0: never)


@dataclass
class RunResult:
    records: list
    events: list  # (step, label) pairs aggregated over the run
    wall_time: float

    def series(self, getter):
        return np.array([getter(r) for r in self.records])

    @property
    def times(self):
        return self.series(lambda r: r.t)

    def detector_fired(self) -> bool:
        """True if any stability/accuracy breach event was recorded."""
        prefixes = ("negative:", "oscillation:", "dt_halved", "theta_clamped",
                    "step_failed", "accuracy_breach:")
        return any(label.startswith(prefixes) for _, label in self.events)


def _monitor_record(model: FemModel, state: State, probe: Probe, diag, keep_state=False):
    from .output import OutputRecord

    Jnod = model.project_nodal_J(state.u)
    m = probe.monitor_node
    Jm = Jnod[m]
    st0 = model.structural_by_layer[model.mesh.layer_names[0]]
    ratio = state.rho0_S[m] / st0.rho_S_eq
    from .constitutive import ANISOTROPIC

    theta = ratio if st0.growth_model == ANISOTROPIC else float(np.cbrt(ratio))
    return OutputRecord(
        t=state.t,
        u_monitor=state.u[m].copy(),
        Jg=float(ratio),
        theta=float(theta),
        c_P=float(state.c0_P[m] / Jm),
        c_T=float(state.c0_T[m] / Jm),
        c_E=float(state.c0_E[m] / Jm),
        rho_S=float(state.rho0_S[m] / Jm),
        diagnostics=diag,
        line_u=None if probe.line_nodes is None else state.u[probe.line_nodes].copy(),
        state=state.copy() if keep_state else None,
    )


def _stability_events(model: FemModel, state: State, flip_counts, prev_incr, incr) -> list:
    """Negativity, growth-floor clamps, and sustained update oscillations.

    A single direction reversal of a field's increment is a legitimate
    turning point; an instability reverses every step with non-shrinking
    amplitude, so oscillation is only reported after three consecutive
    anti-parallel, non-decaying increments.
    """
    events = []
    fields = state.fields()
    for f in SPECIES_FIELDS:
        scale = model.field_scale[f]
        if np.min(fields[f]) < -NEGATIVITY_TOL * scale:
            events.append(f"negative:{f}")
    theta, _ = model.hex.growth_qp(state.rho0_S)
    if np.any(theta <= 0.5):
        events.append("theta_clamped")
    if prev_incr is not None:
        for f in SPECIES_FIELDS:
            a, b = prev_incr[f], incr[f]
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            flipping = na > 0 and nb > 0.9 * na and float(a @ b / (na * nb)) < -0.5
            flip_counts[f] = flip_counts.get(f, 0) + 1 if flipping else 0
            if flip_counts[f] >= 3:
                events.append(f"oscillation:{f}")
    return events


def run(model: FemModel, state0: State, cfg: TimeSteppingConfig, probe: Probe | None = None) -> RunResult:
    """March from state0.t to t_end, emitting one output record per step.

    Failed steps are retried with a halved time step (up to
    cfg.max_step_halvings); persistent failure raises SimulationError with
    the failing time. Stability diagnostics (negative concentrations,
    clamped growth stretch, oscillating staggered updates) are collected as
    events but do not stop the run.
    """
    cfg.validate()
    probe = probe or Probe()
    t_start = time.perf_counter()
    diag0 = StepDiagnostics(step=0, t=state0.t, dt=0.0, newton_iters=0, residuals=[],
                            wall_time=0.0)
    records = [_monitor_record(model, state0, probe, diag0, keep_state=probe.field_interval > 0)]
    events = []
    state = state0
    prev_incr = None
    flip_counts = {}
    step = 0
    while state.t < cfg.t_end - 1e-9 * max(cfg.t_end, 1.0):
        dt_step = min(cfg.dt, cfg.t_end - state.t)
        step += 1
        step_events = []
        t0 = time.perf_counter()
        for attempt in range(cfg.max_step_halvings + 1):
            try:
                if cfg.scheme == "monolithic":
                    new_state, iters, residuals = step_monolithic(model, state, dt_step, cfg)
                    solves = iters
                else:
                    new_state, iters, residuals, solves, sub_events = step_staggered(
                        model, state, dt_step, cfg)
                    step_events.extend(sub_events)
                break
            except (StepFailure, InvertedElementError) as exc:
                step_events.append(f"dt_halved:{dt_step / 2:.6g}")
                dt_step *= 0.5
                last_exc = exc
        else:
            events.extend((step, e) for e in step_events)
            raise SimulationError(
                f"step {step} failed at t={state.t + dt_step * 2} after "
                f"{cfg.max_step_halvings} halvings: {last_exc}",
                t=state.t,
                diagnostics=events,
            )
        wall = time.perf_counter() - t0

        incr = {f: new_state.fields()[f] - state.fields()[f] for f in SPECIES_FIELDS}
        step_events.extend(_stability_events(model, new_state, flip_counts, prev_incr, incr))
        prev_incr = incr
        diag = StepDiagnostics(step=step, t=new_state.t, dt=dt_step, newton_iters=iters,
                               residuals=residuals, wall_time=wall, events=step_events,
                               species_solves=solves)
        events.extend((step, e) for e in step_events)
        keep = probe.field_interval > 0 and step % probe.field_interval == 0
        records.append(_monitor_record(model, new_state, probe, diag, keep_state=keep))
        state = new_state
    return RunResult(records=records, events=events, wall_time=time.perf_counter() - t_start)
