"""Element-level residuals and coupled stiffness blocks.

The 5-field trilinear hexahedron carries the four species equations and the
quasi-static momentum balance; the bilinear surface quad carries the
deformation-dependent growth-factor flux. Evaluation is batched: one call
computes every quadrature point of every element of a mesh through numpy
einsums, grouped by material layer.

dof blocks are keyed 'P', 'T', 'E', 'S' (8 nodal values each) and 'u'
(24 values, node-major / component-minor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import ANISOTROPIC, StructuralParams, growth_direction, stress_tangent_core, structural_tensor
from .kinetics import EXP_CLAMP, SpeciesParams
from .profiles import PiecewiseLinear

_HEX_SIGNS = np.array(
    [
        (-1, -1, -1),
        (+1, -1, -1),
        (+1, +1, -1),
        (-1, +1, -1),
        (-1, -1, +1),
        (+1, -1, +1),
        (+1, +1, +1),
        (-1, +1, +1),
    ],
    dtype=float,
)

_QUAD_SIGNS = np.array([(-1, -1), (+1, -1), (+1, +1), (-1, +1)], dtype=float)

SPECIES_FIELDS = ("P", "T", "E", "S")
ALL_FIELDS = ("P", "T", "E", "S", "u")


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray


def hex_quadrature() -> tuple:
    """2x2x2 Gauss rule; weights sum to the reference volume 8."""
    g = 1.0 / np.sqrt(3.0)
    pts = g * _HEX_SIGNS
    return pts, np.ones(8)


def quad_quadrature() -> tuple:
    """2x2 Gauss rule; weights sum to the reference area 4."""
    g = 1.0 / np.sqrt(3.0)
    pts = g * _QUAD_SIGNS
    return pts, np.ones(4)


def shape_hex8(xi, eta, zeta):
    """Trilinear shape functions and their isoparametric derivatives."""
    s = _HEX_SIGNS
    N = 0.125 * (1 + s[:, 0] * xi) * (1 + s[:, 1] * eta) * (1 + s[:, 2] * zeta)
    dN = 0.125 * np.column_stack(
        [
            s[:, 0] * (1 + s[:, 1] * eta) * (1 + s[:, 2] * zeta),
            (1 + s[:, 0] * xi) * s[:, 1] * (1 + s[:, 2] * zeta),
            (1 + s[:, 0] * xi) * (1 + s[:, 1] * eta) * s[:, 2],
        ]
    )
    return N, dN


def shape_quad4(xi, eta):
    """Bilinear shape functions and derivatives on the reference quad."""
    s = _QUAD_SIGNS
    N = 0.25 * (1 + s[:, 0] * xi) * (1 + s[:, 1] * eta)
    dN = 0.25 * np.column_stack([s[:, 0] * (1 + s[:, 1] * eta), (1 + s[:, 0] * xi) * s[:, 1]])
    return N, dN


@dataclass
class ElementContribution:
    """Dense residual and stiffness blocks of a single element."""

    residuals: dict
    stiffness: dict


@dataclass
class FluxPatchParams:
    """Robin-type flux interface data: wall permeability and ambient histories."""

    p_en: float  # mm/day
    ambient_P: PiecewiseLinear  # cbar_P(t) [mol/mm^3]
    ambient_T: PiecewiseLinear

    def __post_init__(self):
        if self.p_en < 0.0:
            raise ValueError("p_en must be non-negative")


class InvertedElementError(RuntimeError):
    def __init__(self, element_ids):
        self.element_ids = np.atleast_1d(element_ids)
        super().__init__(f"non-positive Jacobian in element(s) {self.element_ids.tolist()}")


def _logistic(arg):
    return 1.0 / (1.0 + np.exp(np.clip(arg, -EXP_CLAMP, EXP_CLAMP)))


class HexBatch:
    """Batched residual/stiffness evaluation over all hexahedra of a mesh."""

    def __init__(self, nodes, elements, layer_tags, layer_names, fibers,
                 structural_by_layer, species_by_layer):
        self.elements = np.asarray(elements)
        self.n_elements = self.elements.shape[0]
        pts, wts = hex_quadrature()
        Ns, dNs = [], []
        for xi, eta, zeta in pts:
            N, dN = shape_hex8(xi, eta, zeta)
            Ns.append(N)
            dNs.append(dN)
        self.N = np.array(Ns)  # (q, a)
        dN = np.array(dNs)  # (q, a, 3)
        self.NN = np.einsum("qa,qb->qab", self.N, self.N)

        xe = nodes[self.elements]  # (e, 8, 3)
        jac = np.einsum("eai,qaj->eqij", xe, dN)  # dX/dxi
        detj = np.linalg.det(jac)
        if np.any(detj <= 0.0):
            raise InvertedElementError(np.flatnonzero((detj <= 0).any(axis=1)))
        self.B = np.einsum("qak,eqkj->eqaj", dN, np.linalg.inv(jac))  # dN/dX
        self.wdet = wts[None, :] * detj  # (e, q)

        # per-layer element groups with their coefficient sets
        self.groups = []
        for tag, name in enumerate(layer_names):
            ids = np.flatnonzero(np.asarray(layer_tags) == tag)
            if ids.size == 0:
                continue
            sp = structural_by_layer[name]
            kp = species_by_layer[name]
            a01 = fibers[ids, 0]
            a02 = fibers[ids, 1]
            H1 = structural_tensor(a01, sp.kappa)[:, None]  # broadcast over qps
            H2 = structural_tensor(a02, sp.kappa)[:, None]
            gamma = (
                growth_direction(a01, a02)[:, None] if sp.growth_model == ANISOTROPIC else None
            )
            self.groups.append((ids, sp, kp, H1, H2, gamma))

    # -- kinematic helpers ----------------------------------------------------

    def _gather(self, nodal, ids):
        return nodal[self.elements[ids]]

    def _kinematics(self, ids, u):
        ue = self._gather(u, ids)  # (m, 8, 3)
        B = self.B[ids]
        F = np.eye(3) + np.einsum("mqaj,mai->mqij", B, ue)
        J = np.linalg.det(F)
        if np.any(J <= 0.0):
            bad = ids[np.flatnonzero((J <= 0).any(axis=1))]
            raise InvertedElementError(bad)
        Finv = np.linalg.inv(F)
        Cinv = np.einsum("mqik,mqjk->mqij", Finv, Finv)
        return B, F, J, Finv, Cinv

    def qp_jacobian(self, u) -> np.ndarray:
        """det F at every quadrature point, (n_elements, 8)."""
        out = np.empty((self.n_elements, 8))
        for ids, *_ in self.groups:
            _, _, J, _, _ = self._kinematics(ids, u)
            out[ids] = J
        return out

    def project_to_nodes(self, qp_values, n_nodes) -> np.ndarray:
        """Volume-weighted projection of quadrature-point values to nodes.

        Exact for globally constant fields; first-order accurate recovery
        otherwise. Deterministic (bincount accumulation).
        """
        contrib = np.einsum("eq,qa->ea", self.wdet * qp_values, self.N)
        weight = np.einsum("eq,qa->ea", self.wdet, self.N)
        flat = self.elements.ravel()
        num = np.bincount(flat, weights=contrib.ravel(), minlength=n_nodes)
        den = np.bincount(flat, weights=weight.ravel(), minlength=n_nodes)
        return num / den

    # -- monolithic blocks ----------------------------------------------------

    def monolithic(self, fields, fields_old, Jnod, dt):
        """All Eq.-40 residual and stiffness blocks, everything implicit.

        Grad J is evaluated from the supplied nodal field `Jnod`, which is
        held fixed under linearization (recovery-based gradient).
        """
        R = {f: np.zeros((self.n_elements, 8)) for f in SPECIES_FIELDS}
        R["u"] = np.zeros((self.n_elements, 24))
        K = {}
        for pair in [
            ("P", "P"), ("P", "T"), ("P", "S"), ("T", "T"), ("T", "S"),
            ("E", "P"), ("E", "E"), ("E", "S"), ("S", "P"), ("S", "T"),
            ("S", "E"), ("S", "S"),
        ]:
            K[pair] = np.zeros((self.n_elements, 8, 8))
        for f in SPECIES_FIELDS:
            K[(f, "u")] = np.zeros((self.n_elements, 8, 24))
        K[("u", "E")] = np.zeros((self.n_elements, 24, 8))
        K[("u", "S")] = np.zeros((self.n_elements, 24, 8))
        K[("u", "u")] = np.zeros((self.n_elements, 24, 24))

        for ids, sp, kp, H1, H2, gamma in self.groups:
            self._group_monolithic(ids, sp, kp, H1, H2, gamma, fields, fields_old, Jnod, dt, R, K)
        return R, K

    def _group_monolithic(self, ids, sp, kp, H1, H2, gamma, fields, fields_old, Jnod, dt, R, K):
        N, NN = self.N, self.NN
        B, F, J, Finv, Cinv = self._kinematics(ids, fields["u"])
        wdet = self.wdet[ids]
        m = ids.size

        cPe = self._gather(fields["P"], ids)
        cTe = self._gather(fields["T"], ids)
        cEe = self._gather(fields["E"], ids)
        Se = self._gather(fields["S"], ids)
        cP = np.einsum("ma,qa->mq", cPe, N)
        cT = np.einsum("ma,qa->mq", cTe, N)
        cE = np.einsum("ma,qa->mq", cEe, N)
        S = np.einsum("ma,qa->mq", Se, N)
        cPdot = np.einsum("ma,qa->mq", cPe - self._gather(fields_old["P"], ids), N) / dt
        cTdot = np.einsum("ma,qa->mq", cTe - self._gather(fields_old["T"], ids), N) / dt
        cEdot = np.einsum("ma,qa->mq", cEe - self._gather(fields_old["E"], ids), N) / dt
        Sdot = np.einsum("ma,qa->mq", Se - self._gather(fields_old["S"], ids), N) / dt

        gP = np.einsum("mqai,ma->mqi", B, cPe)
        gE = np.einsum("mqai,ma->mqi", B, cEe)
        gT = np.einsum("mqai,ma->mqi", B, cTe)
        gJ = np.einsum("mqai,ma->mqi", B, self._gather(Jnod, ids))

        # gates on spatial concentrations
        fT = _logistic(kp.l_T * (cT / J - kp.c_T_th))
        fP = _logistic(-kp.l_P * (cP / J - kp.c_P_th))
        dfT = -kp.l_T * fT * (1.0 - fT)  # d/d(spatial c_T)
        dfP = kp.l_P * fP * (1.0 - fP)
        sat = 1.0 - cE / (J * kp.c_E_th)

        V = np.einsum("mqij,mqaj->mqai", Cinv, B)
        DJ = J[..., None, None] * np.einsum("mqjk,mqbj->mqbk", Finv, B)

        def add_r_mass(field, M):
            R[field][ids] += np.einsum("mq,qa->ma", wdet * M, N)

        def add_r_grad(field, coef, vec):
            R[field][ids] += np.einsum("mq,mqi,mqai->ma", wdet * coef, vec, V)

        def add_k_mass(pair, coef):
            K[pair][ids] += np.einsum("mq,qab->mab", wdet * coef, NN)

        def add_k_u_mass(field, dM_dJ):
            # mass-type integrand differentiated through J(u)
            K[(field, "u")][ids] += np.einsum(
                "mq,qa,mqbk->mabk", wdet * dM_dJ, N, DJ
            ).reshape(m, 8, 24)

        def grad_dot(vec):
            return np.einsum("mqi,mqai->mqa", vec, V)

        def add_k_grad_own(field, pair, coef, own_grad=False, gJ_coef=None):
            # d(coef * vec^T V_a)/d(own nodal value) where vec = g_own + gJ_coef*gJ
            if own_grad:
                K[pair][ids] += np.einsum("mq,mqbi,mqai->mab", wdet * coef, B, V)
            if gJ_coef is not None:
                gJV = grad_dot(gJ)
                K[pair][ids] += np.einsum("mq,qb,mqa->mab", wdet * coef * gJ_coef, N, gJV)

        def add_k_grad_u(field, coef, vec, dcoef_dJ, dvec_dJ):
            # u-derivative of  coef(J) * vec(J)^T Cinv B_a
            p = np.einsum("mqij,mqj->mqi", Cinv, vec)
            Fp = np.einsum("mqik,mqk->mqi", F, p)
            FV = np.einsum("mqik,mqak->mqai", F, V)
            pB = np.einsum("mqk,mqbk->mqb", p, B)
            BV = np.einsum("mqbk,mqak->mqab", B, V)
            blk = -np.einsum("mq,mqb,mqak->mabk", wdet * coef, pB, FV)
            blk -= np.einsum("mq,mqk,mqab->mabk", wdet * coef, Fp, BV)
            scal = dcoef_dJ[..., None] * grad_dot(vec) + coef[..., None] * grad_dot(dvec_dJ)
            blk += np.einsum("mq,mqa,mqbk->mabk", wdet, scal, DJ)
            K[(field, "u")][ids] += blk.reshape(m, 8, 24)

        # ---------------- PDGF row ----------------
        MP = cPdot - (kp.eta_P / J) * S * cT + (kp.eps_P / J) * fT * S * cP
        add_r_mass("P", MP)
        vP = gP - (cP / J)[..., None] * gJ
        add_r_grad("P", kp.D_P * np.ones_like(J), vP)

        add_k_mass(("P", "P"), 1.0 / dt + (kp.eps_P / J) * fT * S)
        add_k_grad_own("P", ("P", "P"), kp.D_P * np.ones_like(J), own_grad=True, gJ_coef=-1.0 / J)
        add_k_mass(("P", "T"), -(kp.eta_P / J) * S + (kp.eps_P / J) * S * cP * dfT / J)
        add_k_mass(("P", "S"), -(kp.eta_P / J) * cT + (kp.eps_P / J) * fT * cP)
        dMP_dJ = (
            (kp.eta_P / J**2) * S * cT
            - (kp.eps_P / J**2) * fT * S * cP
            + (kp.eps_P / J) * S * cP * dfT * (-cT / J**2)
        )
        add_k_u_mass("P", dMP_dJ)
        add_k_grad_u("P", kp.D_P * np.ones_like(J), vP, np.zeros_like(J), (cP / J**2)[..., None] * gJ)

        # ---------------- TGF row ----------------
        MT = cTdot + (kp.eps_T / J) * S * cT
        add_r_mass("T", MT)
        vT = gT - (cT / J)[..., None] * gJ
        add_r_grad("T", kp.D_T * np.ones_like(J), vT)

        add_k_mass(("T", "T"), 1.0 / dt + (kp.eps_T / J) * S)
        add_k_grad_own("T", ("T", "T"), kp.D_T * np.ones_like(J), own_grad=True, gJ_coef=-1.0 / J)
        add_k_mass(("T", "S"), (kp.eps_T / J) * cT)
        dMT_dJ = -(kp.eps_T / J**2) * S * cT
        add_k_u_mass("T", dMT_dJ)
        add_k_grad_u("T", kp.D_T * np.ones_like(J), vT, np.zeros_like(J), (cT / J**2)[..., None] * gJ)

        # ---------------- ECM row ----------------
        ME = cEdot - kp.eta_E * S * sat + (kp.eps_E / J) * cP * cE
        add_r_mass("E", ME)
        add_k_mass(("E", "P"), (kp.eps_E / J) * cE)
        add_k_mass(("E", "E"), 1.0 / dt + kp.eta_E * S / (J * kp.c_E_th) + (kp.eps_E / J) * cP)
        add_k_mass(("E", "S"), -kp.eta_E * sat)
        dME_dJ = -kp.eta_E * S * cE / (J**2 * kp.c_E_th) - (kp.eps_E / J**2) * cP * cE
        add_k_u_mass("E", dME_dJ)

        # ---------------- SMC row ----------------
        # proliferation carries 1/J: the exact pull-back of the spatial term
        MS = Sdot - (kp.eta_S / J) * cP * S * sat * fT
        add_r_mass("S", MS)
        chemo_coef = -(kp.chi_C / J) * sat * S
        hapto_coef = (kp.chi_H / J) * fP * S
        add_r_grad("S", chemo_coef, vP)
        add_r_grad("S", hapto_coef, vE := gE - (cE / J)[..., None] * gJ)

        add_k_mass(("S", "P"), -(kp.eta_S / J) * S * sat * fT)
        add_k_grad_own("S", ("S", "P"), chemo_coef, own_grad=True, gJ_coef=-1.0 / J)
        K[("S", "P")][ids] += np.einsum(
            "mq,qb,mqa->mab", wdet * (kp.chi_H / J**2) * dfP * S, N, grad_dot(vE)
        )
        add_k_mass(("S", "T"), -(kp.eta_S / J) * cP * S * sat * dfT / J)
        add_k_mass(("S", "E"), (kp.eta_S / J) * cP * S * fT / (J * kp.c_E_th))
        K[("S", "E")][ids] += np.einsum(
            "mq,qb,mqa->mab", wdet * (kp.chi_C / (J**2 * kp.c_E_th)) * S, N, grad_dot(vP)
        )
        add_k_grad_own("S", ("S", "E"), hapto_coef, own_grad=True, gJ_coef=-1.0 / J)
        add_k_mass(("S", "S"), 1.0 / dt - (kp.eta_S / J) * cP * sat * fT)
        K[("S", "S")][ids] += np.einsum(
            "mq,qb,mqa->mab", wdet * (-(kp.chi_C / J) * sat), N, grad_dot(vP)
        )
        K[("S", "S")][ids] += np.einsum(
            "mq,qb,mqa->mab", wdet * ((kp.chi_H / J) * fP), N, grad_dot(vE)
        )
        dMS_dJ = (
            (kp.eta_S / J**2) * cP * S * sat * fT
            - (kp.eta_S / J) * cP * S * (cE / (J**2 * kp.c_E_th)) * fT
            - (kp.eta_S / J) * cP * S * sat * dfT * (-cT / J**2)
        )
        add_k_u_mass("S", dMS_dJ)
        d_chemo_dJ = (kp.chi_C / J**2) * sat * S - (kp.chi_C / J) * (cE / (J**2 * kp.c_E_th)) * S
        add_k_grad_u("S", chemo_coef, vP, d_chemo_dJ, (cP / J**2)[..., None] * gJ)
        d_hapto_dJ = -(kp.chi_H / J**2) * fP * S + (kp.chi_H / J) * S * dfP * (-cP / J**2)
        add_k_grad_u("S", hapto_coef, vE, d_hapto_dJ, (cE / J**2)[..., None] * gJ)

        # ---------------- momentum row ----------------
        st = stress_tangent_core(F, S, cE, H1, H2, gamma, sp)
        R["u"][ids] += np.einsum("mq,mqaj,mqij->mai", wdet, B, st.P).reshape(m, 24)
        K[("u", "u")][ids] += np.einsum(
            "mq,mqaj,mqijkl,mqbl->maibk", wdet, B, st.A, B, optimize=True
        ).reshape(m, 24, 24)
        K[("u", "S")][ids] += np.einsum(
            "mq,mqaj,mqij,qb->maib", wdet, B, st.dP_drho, N
        ).reshape(m, 24, 8)
        K[("u", "E")][ids] += np.einsum(
            "mq,mqaj,mqij,qb->maib", wdet, B, st.dP_dcE, N
        ).reshape(m, 24, 8)

    # -- staggered paths -------------------------------------------------------

    def species_semi(self, field, own_new, fields_old, Jnod_old, dt):
        """Semi-implicit residual and symmetric diagonal stiffness of one species.

        Geometry and all other fields are frozen at the previous step; terms
        advecting the field along Grad J (and, for the SMC equation, the
        taxis fluxes) are treated explicitly so the matrix stays symmetric.
        """
        R = np.zeros((self.n_elements, 8))
        Kd = np.zeros((self.n_elements, 8, 8))
        for ids, sp, kp, H1, H2, gamma in self.groups:
            N, NN = self.N, self.NN
            B, F, J, Finv, Cinv = self._kinematics(ids, fields_old["u"])
            wdet = self.wdet[ids]
            V = np.einsum("mqij,mqaj->mqai", Cinv, B)

            cPo = np.einsum("ma,qa->mq", self._gather(fields_old["P"], ids), N)
            cTo = np.einsum("ma,qa->mq", self._gather(fields_old["T"], ids), N)
            cEo = np.einsum("ma,qa->mq", self._gather(fields_old["E"], ids), N)
            So = np.einsum("ma,qa->mq", self._gather(fields_old["S"], ids), N)
            gJ = np.einsum("mqai,ma->mqi", B, self._gather(Jnod_old, ids))
            fTo = _logistic(kp.l_T * (cTo / J - kp.c_T_th))
            fPo = _logistic(-kp.l_P * (cPo / J - kp.c_P_th))
            sato = 1.0 - cEo / (J * kp.c_E_th)

            xe_new = self._gather(own_new, ids)
            xold = {"P": cPo, "T": cTo, "E": cEo, "S": So}[field]
            xq = np.einsum("ma,qa->mq", xe_new, N)
            xdot = (xq - xold) / dt

            if field == "P":
                react = 1.0 / dt + (kp.eps_P / J) * fTo * So
                const = -(kp.eta_P / J) * So * cTo
                diff = kp.D_P
            elif field == "T":
                react = 1.0 / dt + (kp.eps_T / J) * So
                const = np.zeros_like(J)
                diff = kp.D_T
            elif field == "E":
                react = 1.0 / dt + kp.eta_E * So / (J * kp.c_E_th) + (kp.eps_E / J) * cPo
                const = -kp.eta_E * So
                diff = 0.0
            else:  # S
                react = 1.0 / dt - (kp.eta_S / J) * cPo * sato * fTo
                const = np.zeros_like(J)
                diff = 0.0

            M = xdot + (react - 1.0 / dt) * xq + const
            R[ids] += np.einsum("mq,qa->ma", wdet * M, N)
            Kd[ids] += np.einsum("mq,qab->mab", wdet * react, NN)
            if diff:
                gx = np.einsum("mqai,ma->mqi", B, xe_new)
                R[ids] += diff * np.einsum("mq,mqi,mqai->ma", wdet, gx, V)
                Kd[ids] += diff * np.einsum("mq,mqbi,mqai->mab", wdet, B, V)
                # advective correction along Grad J, explicit in the own value
                # to keep the system matrix symmetric
                R[ids] -= diff * np.einsum("mq,mqi,mqai->ma", wdet * (xold / J), gJ, V)
            if field == "S":
                # explicit chemotaxis/haptotaxis fluxes at the old state
                gPo = np.einsum("mqai,ma->mqi", B, self._gather(fields_old["P"], ids))
                gEo = np.einsum("mqai,ma->mqi", B, self._gather(fields_old["E"], ids))
                vP = gPo - (cPo / J)[..., None] * gJ
                vE = gEo - (cEo / J)[..., None] * gJ
                R[ids] += np.einsum(
                    "mq,mqi,mqai->ma", wdet * (-(kp.chi_C / J) * sato * So), vP, V
                )
                R[ids] += np.einsum(
                    "mq,mqi,mqai->ma", wdet * ((kp.chi_H / J) * fPo * So), vE, V
                )
        return R, Kd

    def mechanics(self, u, cE, S, need_tangent=True):
        """Displacement residual and K_uu at fixed species values."""
        R = np.zeros((self.n_elements, 24))
        Kuu = np.zeros((self.n_elements, 24, 24)) if need_tangent else None
        for ids, sp, kp, H1, H2, gamma in self.groups:
            B, F, J, Finv, Cinv = self._kinematics(ids, u)
            wdet = self.wdet[ids]
            cEq = np.einsum("ma,qa->mq", self._gather(cE, ids), self.N)
            Sq = np.einsum("ma,qa->mq", self._gather(S, ids), self.N)
            st = stress_tangent_core(F, Sq, cEq, H1, H2, gamma, sp)
            m = ids.size
            R[ids] += np.einsum("mq,mqaj,mqij->mai", wdet, B, st.P).reshape(m, 24)
            if need_tangent:
                Kuu[ids] += np.einsum(
                    "mq,mqaj,mqijkl,mqbl->maibk", wdet, B, st.A, B, optimize=True
                ).reshape(m, 24, 24)
        return R, Kuu

    def integrate_nodal(self, nodal) -> float:
        """Integral of a nodal field over the reference domain."""
        vals = np.einsum("ea,qa,eq->", nodal[self.elements], self.N, self.wdet)
        return float(vals)

    def growth_qp(self, S):
        """theta and Jg at quadrature points, for output averaging."""
        theta = np.empty((self.n_elements, 8))
        Jg = np.empty((self.n_elements, 8))
        for ids, sp, kp, H1, H2, gamma in self.groups:
            Sq = np.einsum("ma,qa->mq", self._gather(S, ids), self.N)
            ratio = Sq / sp.rho_S_eq
            if sp.growth_model == ANISOTROPIC:
                th = np.maximum(ratio, 0.5)
                theta[ids], Jg[ids] = th, th
            else:
                th = np.maximum(np.cbrt(ratio), 0.5)
                theta[ids], Jg[ids] = th, th**3
        return theta, Jg


def hex_residual_tangent(
    nodes, connectivity, fields_new, fields_old, dt, structural: StructuralParams,
    species: SpeciesParams, fibers, Jnod=None, scheme="monolithic",
) -> ElementContribution:
    """Single-element convenience wrapper around the batched evaluator.

    scheme is 'monolithic' or ('semi', field) with field in P/T/E/S/u.
    fields_* map field names to nodal arrays over the 8 element nodes.
    """
    batch = HexBatch(
        np.asarray(nodes),
        np.asarray(connectivity).reshape(1, 8),
        np.zeros(1, dtype=int),
        ("homogeneous",),
        np.asarray(fibers).reshape(1, 2, 3),
        {"homogeneous": structural},
        {"homogeneous": species},
    )
    if Jnod is None:
        uref = fields_new["u"] if scheme == "monolithic" else fields_old["u"]
        Jnod = batch.project_to_nodes(batch.qp_jacobian(uref), len(nodes))
    if scheme == "monolithic":
        R, K = batch.monolithic(fields_new, fields_old, Jnod, dt)
        return ElementContribution(
            residuals={f: R[f][0] for f in ALL_FIELDS},
            stiffness={pair: blk[0] for pair, blk in K.items()},
        )
    kind, field = scheme
    if kind != "semi":
        raise ValueError(f"unknown scheme {scheme!r}")
    if field == "u":
        R, Kuu = batch.mechanics(fields_new["u"], fields_new["E"], fields_new["S"])
        return ElementContribution(
            residuals={"u": R[0]}, stiffness={("u", "u"): Kuu[0]}
        )
    R, Kd = batch.species_semi(field, fields_new[field], fields_old, Jnod, dt)
    return ElementContribution(residuals={field: R[0]}, stiffness={(field, field): Kd[0]})


class SurfaceFluxBatch:
    """Growth-factor flux quads: residual pull-back via the surface Piola map."""

    def __init__(self, nodes, quads):
        self.quads = np.asarray(quads)
        pts, wts = quad_quadrature()
        Ns, dNs = [], []
        for xi, eta in pts:
            N, dN = shape_quad4(xi, eta)
            Ns.append(N)
            dNs.append(dN)
        self.N = np.array(Ns)  # (q, a)
        self.dN = np.array(dNs)  # (q, a, 2)
        self.NN = np.einsum("qa,qb->qab", self.N, self.N)
        self.w = wts
        self.X = nodes[self.quads]  # (p, 4, 3)
        T1 = np.einsum("qa,pai->pqi", self.dN[:, :, 0], self.X)
        T2 = np.einsum("qa,pai->pqi", self.dN[:, :, 1], self.X)
        Nvec = np.cross(T1, T2)
        self.area_jac = np.sqrt(np.einsum("pqi,pqi->pq", Nvec, Nvec))
        if np.any(self.area_jac <= 0.0):
            raise ValueError("degenerate surface quad (zero area)")
        self.Nref = Nvec / self.area_jac[..., None]
        self.T1, self.T2 = T1, T2
        # reference surface Jacobian [T1 T2 N] and its inverse
        self.J0 = np.stack([T1, T2, self.Nref], axis=-1)
        self.J0inv = np.linalg.inv(self.J0)

    def _per_qp(self, u_patch, c_patch):
        t1 = self.T1 + np.einsum("qa,pai->pqi", self.dN[:, :, 0], u_patch)
        t2 = self.T2 + np.einsum("qa,pai->pqi", self.dN[:, :, 1], u_patch)
        nvec = np.cross(t1, t2)
        nnorm = np.sqrt(np.einsum("pqi,pqi->pq", nvec, nvec))
        n = nvec / nnorm[..., None]
        j = np.stack([t1, t2, n], axis=-1)
        Fs = np.einsum("pqik,pqkj->pqij", j, self.J0inv)
        Jdet = np.linalg.det(Fs)
        FinvT = np.swapaxes(np.linalg.inv(Fs), -1, -2)
        nFN = np.einsum("pqi,pqij,pqj->pq", n, FinvT, self.Nref)
        c0 = np.einsum("qa,pa->pq", self.N, c_patch)
        return Jdet, nFN, c0

    def residual(self, u_patch, c_patch, cbar, p_en):
        """Nodal contributions -int J qbar (n.F^-T.N) N_a dA per patch."""
        Jdet, nFN, c0 = self._per_qp(u_patch, c_patch)
        qbar = p_en * (cbar - c0 / Jdet)
        scal = self.w[None, :] * self.area_jac * Jdet * qbar * nFN
        return -np.einsum("pq,qa->pa", scal, self.N)

    def tangent_cc(self, u_patch, p_en):
        """d residual / d nodal c0; symmetric surface mass-type block."""
        Jdet, nFN, _ = self._per_qp(u_patch, np.zeros(self.quads.shape))
        coef = self.w[None, :] * self.area_jac * p_en * nFN
        return np.einsum("pq,qab->pab", coef, self.NN)

    def tangent_cu(self, u_patch, c_patch, cbar, p_en, h=1e-30):
        """d residual / d nodal displacements by complex-step differentiation."""
        out = np.zeros((self.quads.shape[0], 4, 4, 3))
        for b in range(4):
            for k in range(3):
                up = u_patch.astype(complex).copy()
                up[:, b, k] += 1j * h
                Rp = self.residual(up, c_patch, cbar, p_en)
                out[:, :, b, k] = Rp.imag / h
        return out.reshape(self.quads.shape[0], 4, 12)
