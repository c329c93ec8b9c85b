"""Scaling functions, reaction rates and transport coefficients of the wall species.

All rates are expressed in the reference configuration: reference species
variables relate to spatial ones by c0 = J*c, and every evaluator here is the
Lagrangian pull-back of the corresponding spatial (Eulerian) form. The
`*_spatial` twins implement the Eulerian forms directly and exist so tests can
verify the pull-back identities point by point.

Everything broadcasts over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Logistic arguments are clipped here: the steepness coefficients of the
# scaling functions are ~1e16 mm^3/mol, so raw exponents overflow for
# ordinary concentration excursions. Clipping preserves the saturated value.
EXP_CLAMP = 500.0


@dataclass
class SpeciesParams:
    """Transport/reaction coefficients of one material layer.

    Units: diffusivities mm^2/day; eta_P, eps_P, eps_T, eta_S mm^3/cell/day;
    eta_E mol/cell/day; eps_E mm^3/mol/day; chi_C, chi_H mm^5/mol/day;
    thresholds and concentrations mol/mm^3; steepness mm^3/mol;
    rho_S_eq cells/mm^3.
    """

    D_P: float = 0.1
    D_T: float = 0.1
    eta_P: float = 1.0e-6
    eps_P: float = 1.0e-7
    eps_T: float = 1.0e-7
    eta_E: float = 1.0e-7
    eps_E: float = 1.0e21
    eta_S: float = 1.0e14
    chi_C: float = 1.0e11
    chi_H: float = 1.0e6
    c_P_th: float = 1.0e-15
    c_T_th: float = 1.0e-16
    c_E_eq: float = 7.0e-9
    c_E_th: float = 7.0007e-9
    l_P: float = 1.0e16
    l_T: float = 1.0e16
    rho_S_eq: float = 3.7e5

    def validate(self):
        nonneg = (
            "D_P D_T eta_P eps_P eps_T eta_E eps_E eta_S chi_C chi_H "
            "c_P_th c_T_th c_E_eq c_E_th l_P l_T rho_S_eq"
        ).split()
        for name in nonneg:
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.c_E_th < self.c_E_eq:
            raise ValueError("c_E_th must be >= c_E_eq")
        return self


@dataclass
class SpeciesPointState:
    """Reference-configuration species values at one (or many) material points."""

    c0_P: np.ndarray
    c0_T: np.ndarray
    c0_E: np.ndarray
    rho0_S: np.ndarray
    J: np.ndarray
    Cinv: np.ndarray | None = None  # (..., 3, 3)
    Grad_c0_P: np.ndarray | None = None  # (..., 3)
    Grad_c0_E: np.ndarray | None = None
    Grad_J: np.ndarray | None = None


def f_P(c_P, params: SpeciesParams):
    """PDGF gate: logistic, monotone increasing, 0.5 at the threshold."""
    arg = np.clip(-params.l_P * (np.asarray(c_P) - params.c_P_th), -EXP_CLAMP, EXP_CLAMP)
    return 1.0 / (1.0 + np.exp(arg))


def f_T(c_T, params: SpeciesParams):
    """TGF-beta gate: logistic, monotone decreasing, 0.5 at the threshold."""
    arg = np.clip(params.l_T * (np.asarray(c_T) - params.c_T_th), -EXP_CLAMP, EXP_CLAMP)
    return 1.0 / (1.0 + np.exp(arg))


def df_P(c_P, params: SpeciesParams):
    """d f_P / d c_P (spatial argument)."""
    f = f_P(c_P, params)
    return params.l_P * f * (1.0 - f)


def df_T(c_T, params: SpeciesParams):
    """d f_T / d c_T (spatial argument); non-positive."""
    f = f_T(c_T, params)
    return -params.l_T * f * (1.0 - f)


# ----------------------------------------------------------------------------
# Lagrangian reaction rates (per unit reference volume and day)
# ----------------------------------------------------------------------------

def pdgf_reaction(state: SpeciesPointState, params: SpeciesParams):
    """Autocrine secretion minus gated receptor internalization."""
    J = state.J
    gate = f_T(state.c0_T / J, params)
    return (params.eta_P / J) * state.rho0_S * state.c0_T - (
        params.eps_P / J
    ) * gate * state.rho0_S * state.c0_P


def tgf_reaction(state: SpeciesPointState, params: SpeciesParams):
    """Receptor internalization sink."""
    return -(params.eps_T / state.J) * state.rho0_S * state.c0_T


def ecm_reaction(state: SpeciesPointState, params: SpeciesParams):
    """Saturating collagen secretion minus MMP-driven degradation."""
    J = state.J
    saturation = 1.0 - state.c0_E / (J * params.c_E_th)
    return params.eta_E * state.rho0_S * saturation - (params.eps_E / J) * state.c0_P * state.c0_E


def smc_reaction(state: SpeciesPointState, params: SpeciesParams):
    """Proliferation, gated by PDGF, ECM degradation and the TGF-beta switch.

    The 1/J factor is the exact Lagrangian pull-back of the spatial
    proliferation term (quadratic in species, times J from the time
    derivative transform), matching the same identity the diffusive and
    taxis fluxes satisfy.
    """
    J = state.J
    saturation = 1.0 - state.c0_E / (J * params.c_E_th)
    gate = f_T(state.c0_T / J, params)
    return (params.eta_S / J) * state.c0_P * state.rho0_S * saturation * gate


def smc_flux_coefficients(state: SpeciesPointState, params: SpeciesParams):
    """Chemotactic and haptotactic SMC flux vectors in the reference frame.

    Returned vectors are the pull-backs J F^-1 (spatial flux); their (negative)
    divergences enter the SMC balance with signs (-chemotaxis, +haptotaxis).
    """
    J = state.J
    sat = 1.0 - state.c0_E / (J * params.c_E_th)
    gate = f_P(state.c0_P / J, params)
    ref_grad_cP = state.Grad_c0_P - (state.c0_P / J)[..., None] * state.Grad_J
    ref_grad_cE = state.Grad_c0_E - (state.c0_E / J)[..., None] * state.Grad_J
    chemo = (
        -(params.chi_C / J * sat * state.rho0_S)[..., None]
        * np.einsum("...ij,...j->...i", state.Cinv, ref_grad_cP)
    )
    hapto = (
        (params.chi_H / J * gate * state.rho0_S)[..., None]
        * np.einsum("...ij,...j->...i", state.Cinv, ref_grad_cE)
    )
    return chemo, hapto


def gf_diffusive_flux(c0, Grad_c0, J, Grad_J, Cinv, D):
    """Reference diffusive transport vector D C^-1 (Grad c0 - (c0/J) Grad J).

    Equals J F^-1 (D grad c) for the spatial concentration c = c0/J; it
    vanishes for spatially uniform fields.
    """
    ref_grad = np.asarray(Grad_c0) - (np.asarray(c0) / np.asarray(J))[..., None] * np.asarray(
        Grad_J
    )
    return np.asarray(D) * np.einsum("...ij,...j->...i", Cinv, ref_grad)


# ----------------------------------------------------------------------------
# Eulerian twins (spatial quantities); reference oracles for the pull-back
# ----------------------------------------------------------------------------

def pdgf_reaction_spatial(c_P, c_T, rho_S, params: SpeciesParams):
    return params.eta_P * rho_S * c_T - params.eps_P * f_T(c_T, params) * rho_S * c_P


def tgf_reaction_spatial(c_T, rho_S, params: SpeciesParams):
    return -params.eps_T * rho_S * c_T


def ecm_reaction_spatial(c_P, c_E, rho_S, params: SpeciesParams):
    return params.eta_E * rho_S * (1.0 - c_E / params.c_E_th) - params.eps_E * c_P * c_E


def smc_reaction_spatial(c_P, c_T, c_E, rho_S, params: SpeciesParams):
    sat = 1.0 - c_E / params.c_E_th
    return params.eta_S * f_T(c_T, params) * c_P * rho_S * sat


def smc_flux_spatial(c_P, c_E, rho_S, grad_c_P, grad_c_E, params: SpeciesParams):
    """Spatial Keller-Segel flux vectors (chemotaxis, haptotaxis)."""
    sat = 1.0 - np.asarray(c_E) / params.c_E_th
    chemo = -(params.chi_C * sat * rho_S)[..., None] * np.asarray(grad_c_P)
    hapto = (params.chi_H * f_P(c_P, params) * rho_S)[..., None] * np.asarray(grad_c_E)
    return chemo, hapto


def ecm_closed_form(t, rho_S, params: SpeciesParams):
    """ECM recovery from full degradation at frozen SMC density and no PDGF."""
    tau = params.c_E_th / (params.eta_E * rho_S)
    return params.c_E_th * (1.0 - np.exp(-np.asarray(t) / tau))
