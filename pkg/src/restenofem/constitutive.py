"""Growth kinematics, free energy, first Piola-Kirchhoff stress and tangents.

The free energy splits into a Neo-Hookean matrix part evaluated on the
elastically mapped right Cauchy-Green tensor C* = Ug^-1 C Ug^-1 and an
exponential two-fiber part on the full C. The fiber stiffness scales linearly
with the local reference ECM concentration, and the growth stretch tensor Ug
is a prescribed function of the reference SMC density.

All evaluators broadcast over leading batch dimensions so that element
routines can process every quadrature point of every element in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANISOTROPIC = "anisotropic"
ISOTROPIC = "isotropic"

# Lower bound on the growth stretch; keeps Ug invertible if the SMC density
# is driven far below its homeostatic value.
THETA_FLOOR = 0.5

_I3 = np.eye(3)


@dataclass
class StructuralParams:
    """Layer-wise structural coefficients (MPa / dimensionless units)."""

    mu: float = 0.02
    lam: float = 10.0
    k1_bar: float = 0.112
    k2: float = 20.61
    kappa: float = 0.1
    alpha_deg: float = 41.0
    c_E_eq: float = 7.0e-9  # mol/mm^3
    rho_S_eq: float = 3.7e5  # cells/mm^3
    growth_model: str = ISOTROPIC

    def validate(self):
        if self.mu <= 0 or self.lam <= 0:
            raise ValueError("mu and lam must be positive")
        if self.k1_bar < 0 or self.k2 <= 0:
            raise ValueError("k1_bar must be >= 0 and k2 > 0")
        if not 0.0 <= self.kappa <= 1.0 / 3.0 + 1e-12:
            raise ValueError(f"kappa must lie in [0, 1/3], got {self.kappa}")
        if self.c_E_eq <= 0 or self.rho_S_eq <= 0:
            raise ValueError("c_E_eq and rho_S_eq must be positive")
        if self.growth_model not in (ANISOTROPIC, ISOTROPIC):
            raise ValueError(f"unknown growth model {self.growth_model!r}")
        if self.growth_model == ANISOTROPIC and self.kappa > 1e-12:
            raise ValueError("anisotropic growth assumes perfectly aligned fibers (kappa = 0)")
        return self


@dataclass
class GrowthState:
    theta: np.ndarray  # growth stretch
    Ug: np.ndarray  # (..., 3, 3) right growth stretch tensor
    Jg: np.ndarray  # det(Ug)
    gamma: np.ndarray | None  # growth direction (anisotropic model)
    clamped: np.ndarray  # bool, theta hit the floor


@dataclass
class StressTangent:
    P: np.ndarray  # (..., 3, 3) first Piola-Kirchhoff stress [MPa]
    A: np.ndarray  # (..., 3, 3, 3, 3) dP/dF
    dP_drho: np.ndarray  # (..., 3, 3) dP/d rho0_S through Ug
    dP_dcE: np.ndarray  # (..., 3, 3) dP/d c0_E through k1
    theta: np.ndarray
    Jg: np.ndarray
    clamped: np.ndarray


def structural_tensor(a0: np.ndarray, kappa: float) -> np.ndarray:
    """H = kappa*I + (1-3*kappa) a0 x a0 for a unit fiber direction."""
    a0 = np.asarray(a0, dtype=float)
    norm = np.sqrt(np.einsum("...i,...i->...", a0, a0))
    if not np.allclose(norm, 1.0, atol=1e-10):
        raise ValueError("fiber direction a0 must be a unit vector")
    outer = np.einsum("...i,...j->...ij", a0, a0)
    return kappa * _I3 + (1.0 - 3.0 * kappa) * outer


def fiber_strain(C: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Green-Lagrange fiber strain E = H : C - 1."""
    return np.einsum("...ij,...ij->...", H, C) - 1.0


def growth_direction(a01: np.ndarray, a02: np.ndarray) -> np.ndarray:
    """Unit normal of the fiber plane, gamma = a01 x a02 / ||a01 x a02||."""
    g = np.cross(a01, a02)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(norm < 1e-10):
        raise ValueError("fiber directions are parallel; growth direction undefined")
    return g / norm


def growth_from_density(rho0_S, params: StructuralParams, gamma=None) -> GrowthState:
    """Prescribed growth stretch tensor from the reference SMC density.

    anisotropic: theta = rho/rho_eq,       Ug = I + (theta-1) gamma x gamma
    isotropic:   theta = (rho/rho_eq)^1/3, Ug = theta * I
    """
    rho0_S = np.asarray(rho0_S, dtype=float)
    if np.any(rho0_S <= 0.0):
        raise ValueError("rho0_S must be positive")
    ratio = rho0_S / params.rho_S_eq
    if params.growth_model == ANISOTROPIC:
        if gamma is None:
            raise ValueError("anisotropic growth requires a growth direction")
        theta = ratio
    else:
        theta = np.cbrt(ratio)
    clamped = theta < THETA_FLOOR
    theta = np.maximum(theta, THETA_FLOOR)
    if params.growth_model == ANISOTROPIC:
        gamma = np.asarray(gamma, dtype=float)
        gg = np.einsum("...i,...j->...ij", gamma, gamma)
        Ug = _I3 + (theta[..., None, None] - 1.0) * gg
        Jg = theta
    else:
        Ug = theta[..., None, None] * _I3
        Jg = theta**3
    return GrowthState(theta=theta, Ug=Ug, Jg=Jg, gamma=gamma, clamped=clamped)


def _growth_inverse_sq(theta, gamma, model):
    """G2 = Ug^-2 and d(G2)/d(theta), exploiting the rank-one structure."""
    th = theta[..., None, None]
    if model == ANISOTROPIC:
        gg = np.einsum("...i,...j->...ij", gamma, gamma)
        G2 = _I3 + (th**-2 - 1.0) * gg
        dG2 = -2.0 * th**-3 * gg
    else:
        G2 = th**-2 * _I3
        dG2 = -2.0 * th**-3 * _I3
    return G2, dG2


def _dJg_dtheta(theta, model):
    return np.ones_like(theta) if model == ANISOTROPIC else 3.0 * theta**2


def _fiber_weights(E, k2):
    """w = <E> exp(k2 <E>^2) and its derivative w.r.t. E (zero in compression)."""
    Ep = np.maximum(E, 0.0)
    expo = np.exp(k2 * Ep**2)
    w = Ep * expo
    dw = np.where(E > 0.0, expo * (1.0 + 2.0 * k2 * Ep**2), 0.0)
    return w, dw


def free_energy(F, growth: GrowthState, c0_E, H1, H2, params: StructuralParams):
    """Helmholtz free energy per unit reference volume [MPa]."""
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        raise ValueError("non-positive det(F): inverted state")
    C = np.einsum("...ki,...kj->...ij", F, F)
    G2, _ = _growth_inverse_sq(growth.theta, growth.gamma, params.growth_model)
    trCstar = np.einsum("...ij,...ij->...", C, G2)
    Jstar = J / growth.Jg
    psi_iso = (
        0.5 * params.mu * (trCstar - 3.0)
        - params.mu * np.log(Jstar)
        + 0.25 * params.lam * (Jstar**2 - 1.0 - 2.0 * np.log(Jstar))
    )
    k1 = params.k1_bar * np.asarray(c0_E) / params.c_E_eq
    psi_ani = np.zeros_like(psi_iso)
    for H in (H1, H2):
        E = fiber_strain(C, H)
        Ep = np.maximum(E, 0.0)
        psi_ani = psi_ani + (k1 / (2.0 * params.k2)) * (np.exp(params.k2 * Ep**2) - 1.0)
    return psi_iso + psi_ani


def stress_and_tangent(F, rho0_S, c0_E, fibers, params: StructuralParams) -> StressTangent:
    """Stress and consistent sensitivities from the element fiber frame.

    fibers = (a01, a02). The growth direction for the anisotropic model is
    the fiber-plane normal.
    """
    a01, a02 = fibers
    H1 = structural_tensor(a01, params.kappa)
    H2 = structural_tensor(a02, params.kappa)
    gamma = growth_direction(a01, a02) if params.growth_model == ANISOTROPIC else None
    return stress_tangent_core(F, rho0_S, c0_E, H1, H2, gamma, params)


def stress_tangent_core(F, rho0_S, c0_E, H1, H2, gamma, params: StructuralParams) -> StressTangent:
    """Batched P, dP/dF, dP/drho0_S, dP/dc0_E at fixed Ug(rho) and k1(c_E)."""
    F = np.asarray(F, dtype=float)
    c0_E = np.asarray(c0_E, dtype=float)
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        raise ValueError("non-positive det(F): inverted state")
    model = params.growth_model
    growth = growth_from_density(rho0_S, params, gamma)
    theta, Jg = growth.theta, growth.Jg

    Finv = np.linalg.inv(F)
    FinvT = np.swapaxes(Finv, -1, -2)
    C = np.einsum("...ki,...kj->...ij", F, F)
    G2, dG2 = _growth_inverse_sq(theta, gamma, model)
    Jstar = J / Jg

    mu, lam, k2 = params.mu, params.lam, params.k2
    k1 = params.k1_bar * c0_E / params.c_E_eq
    dk1 = params.k1_bar / params.c_E_eq

    c1 = -mu + 0.5 * lam * (Jstar**2 - 1.0)
    P = mu * np.einsum("...ik,...kj->...ij", F, G2) + c1[..., None, None] * FinvT

    # dP/dF of the matrix part
    A = mu * np.einsum("ik,...lj->...ijkl", _I3, G2)
    A = A + lam * np.einsum("...,...ij,...kl->...ijkl", Jstar**2, FinvT, FinvT)
    A = A - np.einsum("...,...il,...kj->...ijkl", c1, FinvT, FinvT)

    # fiber part
    dP_dcE = np.zeros_like(P)
    for H in (H1, H2):
        E = fiber_strain(C, H)
        w, dw = _fiber_weights(E, k2)
        FH = np.einsum("...ik,...kj->...ij", F, H)
        Hb = np.broadcast_to(np.asarray(H), FH.shape)
        P = P + 2.0 * (k1 * w)[..., None, None] * FH
        A = A + 4.0 * np.einsum("...,...ij,...kl->...ijkl", k1 * dw, FH, FH)
        A = A + 2.0 * np.einsum("...,ik,...lj->...ijkl", k1 * w, _I3, Hb)
        dP_dcE = dP_dcE + 2.0 * dk1 * w[..., None, None] * FH

    # growth sensitivity: theta enters through G2 and Jstar
    dJstar = -Jstar * _dJg_dtheta(theta, model) / Jg
    dP_dtheta = mu * np.einsum("...ik,...kj->...ij", F, dG2) + (lam * Jstar * dJstar)[
        ..., None, None
    ] * FinvT
    rho = np.asarray(rho0_S, dtype=float)
    if model == ANISOTROPIC:
        dtheta_drho = np.full_like(theta, 1.0 / params.rho_S_eq)
    else:
        dtheta_drho = theta / (3.0 * rho)
    dtheta_drho = np.where(growth.clamped, 0.0, dtheta_drho)
    dP_drho = dP_dtheta * dtheta_drho[..., None, None]

    return StressTangent(
        P=P,
        A=A,
        dP_drho=dP_drho,
        dP_dcE=dP_dcE,
        theta=theta,
        Jg=Jg,
        clamped=growth.clamped,
    )
