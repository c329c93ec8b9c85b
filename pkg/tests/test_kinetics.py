import numpy as np
import pytest

from restenofem import kinetics as kin
from restenofem.kinetics import SpeciesParams, SpeciesPointState


@pytest.fixture
def kp():
    return SpeciesParams()


def point_state(kp, c_P=0.0, c_T=0.0, c_E=None, rho=None, J=1.0, **grads):
    n = np.shape(J) or ()
    mk = lambda v: np.asarray(v, dtype=float)
    return SpeciesPointState(
        c0_P=mk(c_P), c0_T=mk(c_T),
        c0_E=mk(kp.c_E_eq if c_E is None else c_E),
        rho0_S=mk(kp.rho_S_eq if rho is None else rho),
        J=mk(J),
        Cinv=grads.get("Cinv"),
        Grad_c0_P=grads.get("Grad_c0_P"),
        Grad_c0_E=grads.get("Grad_c0_E"),
        Grad_J=grads.get("Grad_J"),
    )


class TestScalingFunctions:
    def test_midpoints(self, kp):
        assert np.isclose(kin.f_P(kp.c_P_th, kp), 0.5)
        assert np.isclose(kin.f_T(kp.c_T_th, kp), 0.5)

    def test_fP_at_zero(self, kp):
        # exponent l_P * c_P_th = 10
        assert np.isclose(kin.f_P(0.0, kp), 1.0 / (1.0 + np.exp(10.0)), rtol=1e-12)

    def test_fT_at_zero(self, kp):
        # exponent -l_T * c_T_th = -1
        assert np.isclose(kin.f_T(0.0, kp), 1.0 / (1.0 + np.exp(-1.0)), rtol=1e-12)

    def test_monotone_and_saturating(self, kp):
        c = np.linspace(0.0, 50.0, 400) * kp.c_P_th
        fp = kin.f_P(c, kp)
        assert np.all(np.diff(fp) >= 0.0)
        assert fp[-1] > 1.0 - 1e-12
        ct = np.linspace(0.0, 50.0, 400) * kp.c_T_th
        ft = kin.f_T(ct, kp)
        assert np.all(np.diff(ft) <= 0.0)
        assert ft[-1] < 1e-12

    def test_bounded_under_extreme_arguments(self, kp):
        # raw exponents overflow without clamping
        huge = np.array([-1e3, -1.0, 0.0, 1.0, 1e3])
        for f in (kin.f_P, kin.f_T):
            v = f(huge, kp)
            assert np.all(np.isfinite(v))
            assert np.all((v >= 0.0) & (v <= 1.0))


class TestReactions:
    def test_pdgf_zero_at_no_factors(self, kp):
        assert kin.pdgf_reaction(point_state(kp), kp) == 0.0

    def test_pdgf_independent_recomputation(self, kp):
        c_P, c_T, rho, J = 2.3e-16, 4.0e-17, kp.rho_S_eq, 1.0
        st = point_state(kp, c_P=c_P, c_T=c_T, rho=rho, J=J)
        got = kin.pdgf_reaction(st, kp)
        import math
        gate = 1.0 / (1.0 + math.exp(kp.l_T * (c_T / J - kp.c_T_th)))
        want = kp.eta_P / J * rho * c_T - kp.eps_P / J * gate * rho * c_P
        assert abs(got - want) <= 1e-12 * abs(want)

    def test_pdgf_secretion_scales_inverse_J(self, kp):
        st1 = point_state(kp, c_T=1e-16, J=1.0)
        st2 = point_state(kp, c_T=1e-16, J=2.0)
        # doubling J at fixed reference values halves the secretion term
        assert np.isclose(kin.pdgf_reaction(st2, kp), 0.5 * kin.pdgf_reaction(st1, kp))

    def test_tgf_pure_sink(self, kp):
        assert kin.tgf_reaction(point_state(kp), kp) == 0.0
        st = point_state(kp, c_T=1e-16, rho=3.7e5, J=1.0)
        assert np.isclose(kin.tgf_reaction(st, kp), -3.7e-18, rtol=1e-12)
        for c_T in (1e-18, 5e-16, 3e-15):
            assert kin.tgf_reaction(point_state(kp, c_T=c_T), kp) <= 0.0

    def test_ecm_saturation_and_sign(self, kp):
        st = point_state(kp, c_E=kp.c_E_th, c_P=0.0)
        assert kin.ecm_reaction(st, kp) == 0.0
        sat_rate = kin.ecm_reaction(point_state(kp, c_E=kp.c_E_th, c_P=1e-15), kp)
        assert sat_rate < 0.0  # degradation only

    def test_initial_conditions_rates(self, kp):
        # healthy initial state: only the ECM rate is non-zero and equals the
        # secretion shortfall exactly
        st = point_state(kp)
        assert kin.pdgf_reaction(st, kp) == 0.0
        assert kin.tgf_reaction(st, kp) == 0.0
        assert kin.smc_reaction(st, kp) == 0.0
        want = kp.eta_E * kp.rho_S_eq * (1.0 - kp.c_E_eq / kp.c_E_th)
        assert want > 0.0
        assert np.isclose(kin.ecm_reaction(st, kp), want, rtol=1e-14)

    def test_smc_gates(self, kp):
        assert kin.smc_reaction(point_state(kp, c_P=0.0), kp) == 0.0
        st = point_state(kp, c_P=1e-15, c_E=kp.c_E_th)
        assert kin.smc_reaction(st, kp) == 0.0
        high_T = kin.smc_reaction(point_state(kp, c_P=1e-15, c_E=0.5 * kp.c_E_eq, c_T=1e-13), kp)
        assert high_T < 1e-30  # TGF-beta switch-off


class TestFluxes:
    def test_gf_flux_identity_pullback(self, kp):
        out = kin.gf_diffusive_flux(1e-15, np.array([1.0, 0, 0]) * 1e-15, 1.0,
                                    np.zeros(3), np.eye(3), kp.D_P)
        assert np.allclose(out, [1e-16, 0, 0])

    def test_gf_flux_uniform_spatial_field_vanishes(self, kp):
        # c0 = J * const: Grad c0 = const * Grad J
        c = 3e-16
        J = 1.7
        gJ = np.array([0.2, -0.4, 0.1])
        out = kin.gf_diffusive_flux(c * J, c * gJ, J, gJ, np.eye(3), kp.D_P)
        assert np.allclose(out, 0.0, atol=1e-40)

    def test_gf_flux_pure_dilation(self, kp):
        # F = 2I: Cinv = I/4, J = 8
        out = kin.gf_diffusive_flux(0.0, np.array([1.0, 0, 0]), 8.0, np.zeros(3),
                                    np.eye(3) / 4.0, 0.1)
        assert np.allclose(out, [0.025, 0.0, 0.0])

    def test_smc_fluxes_uniform_fields_vanish(self, kp):
        J, gJ = 1.4, np.array([0.3, 0.1, -0.2])
        cP, cE = 2e-16, 6e-9
        st = point_state(kp, c_P=cP * J, c_E=cE * J, J=J,
                         Cinv=np.eye(3), Grad_c0_P=cP * gJ, Grad_c0_E=cE * gJ, Grad_J=gJ)
        chemo, hapto = kin.smc_flux_coefficients(st, kp)
        assert np.allclose(chemo, 0.0, atol=1e-30)
        assert np.allclose(hapto, 0.0, atol=1e-30)

    def test_chemo_flux_zero_at_saturated_ecm(self, kp):
        st = point_state(kp, c_P=1e-15, c_E=kp.c_E_th, J=1.0,
                         Cinv=np.eye(3), Grad_c0_P=np.array([1e-15, 0, 0]),
                         Grad_c0_E=np.zeros(3), Grad_J=np.zeros(3))
        chemo, _ = kin.smc_flux_coefficients(st, kp)
        assert np.allclose(chemo, 0.0)

    def test_identity_pullback_keller_segel(self, kp):
        # F = I: fluxes reduce to the spatial Keller-Segel forms
        gP = np.array([2.0, -1.0, 0.5]) * 1e-16
        gE = np.array([0.1, 0.2, -0.3]) * 1e-9
        st = point_state(kp, c_P=3e-16, c_E=5e-9, J=1.0, Cinv=np.eye(3),
                         Grad_c0_P=gP, Grad_c0_E=gE, Grad_J=np.zeros(3))
        chemo, hapto = kin.smc_flux_coefficients(st, kp)
        chemo_sp, hapto_sp = kin.smc_flux_spatial(3e-16, 5e-9, kp.rho_S_eq, gP, gE, kp)
        assert np.allclose(chemo, chemo_sp)
        assert np.allclose(hapto, hapto_sp)


def _manufactured(X, a=0.12, b=0.08, c=0.15):
    """Deformation with closed-form F, J, Grad J (F lower triangular)."""
    X1, X2, X3 = X
    x = np.array([X1 + a * X1**2, X2 + b * X1 * X2, X3 * (1.0 + c * X1)])
    F = np.array([
        [1.0 + 2 * a * X1, 0.0, 0.0],
        [b * X2, 1.0 + b * X1, 0.0],
        [c * X3, 0.0, 1.0 + c * X1],
    ])
    J = (1.0 + 2 * a * X1) * (1.0 + b * X1) * (1.0 + c * X1)
    dJ1 = (2 * a * (1.0 + b * X1) * (1.0 + c * X1)
           + (1.0 + 2 * a * X1) * b * (1.0 + c * X1)
           + (1.0 + 2 * a * X1) * (1.0 + b * X1) * c)
    return x, F, J, np.array([dJ1, 0.0, 0.0])


def _spatial_fields(x):
    """Polynomial spatial fields with closed-form spatial gradients."""
    cP = 1e-15 * (1.0 + 0.3 * x[0] + 0.2 * x[1] ** 2)
    gP = 1e-15 * np.array([0.3, 0.4 * x[1], 0.0])
    cT = 1e-16 * (1.0 + 0.5 * x[2])
    cE = 7e-9 * (0.6 + 0.1 * x[0] * x[2])
    gE = 7e-9 * np.array([0.1 * x[2], 0.0, 0.1 * x[0]])
    rho = 3.7e5 * (1.0 + 0.2 * x[1])
    return cP, gP, cT, cE, gE, rho


class TestEulerianLagrangianEquivalence:
    """Manufactured-field checks of the pull-back identities (1e-10 relative)."""

    POINTS = [np.array(p) for p in
              [(0.2, 0.3, 0.5), (0.7, 0.1, 0.9), (0.4, 0.8, 0.2), (0.9, 0.6, 0.7)]]

    def test_reaction_rates(self, kp):
        for X in self.POINTS:
            x, F, J, gJ = _manufactured(X)
            cP, gP, cT, cE, gE, rho = _spatial_fields(x)
            st = point_state(kp, c_P=J * cP, c_T=J * cT, c_E=J * cE, rho=J * rho, J=J)
            pairs = [
                (kin.pdgf_reaction(st, kp), kin.pdgf_reaction_spatial(cP, cT, rho, kp)),
                (kin.tgf_reaction(st, kp), kin.tgf_reaction_spatial(cT, rho, kp)),
                (kin.ecm_reaction(st, kp), kin.ecm_reaction_spatial(cP, cE, rho, kp)),
                (kin.smc_reaction(st, kp), kin.smc_reaction_spatial(cP, cT, cE, rho, kp)),
            ]
            for lagr, euler in pairs:
                assert abs(lagr - J * euler) <= 1e-10 * max(abs(J * euler), 1e-300)

    def test_diffusive_flux_pullback(self, kp):
        for X in self.POINTS:
            x, F, J, gJ = _manufactured(X)
            cP, gP, cT, cE, gE, rho = _spatial_fields(x)
            Cinv = np.linalg.inv(F.T @ F)
            # Grad c0 = J F^T grad(c) + c Grad J
            Grad_c0 = J * F.T @ gP + cP * gJ
            got = kin.gf_diffusive_flux(J * cP, Grad_c0, J, gJ, Cinv, kp.D_P)
            want = J * np.linalg.inv(F) @ (kp.D_P * gP)
            assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))

    def test_smc_flux_pullback(self, kp):
        for X in self.POINTS:
            x, F, J, gJ = _manufactured(X)
            cP, gP, cT, cE, gE, rho = _spatial_fields(x)
            Cinv = np.linalg.inv(F.T @ F)
            st = point_state(
                kp, c_P=J * cP, c_T=J * cT, c_E=J * cE, rho=J * rho, J=J, Cinv=Cinv,
                Grad_c0_P=J * F.T @ gP + cP * gJ,
                Grad_c0_E=J * F.T @ gE + cE * gJ,
                Grad_J=gJ,
            )
            chemo, hapto = kin.smc_flux_coefficients(st, kp)
            chemo_sp, hapto_sp = kin.smc_flux_spatial(cP, cE, rho, gP, gE, kp)
            Finv = np.linalg.inv(F)
            for got, want in ((chemo, J * Finv @ chemo_sp), (hapto, J * Finv @ hapto_sp)):
                assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))


class TestClosedFormEcm:
    def test_reduced_ode_matches_closed_form(self, kp):
        # backward-Euler integration of the reduced ODE converges to the
        # closed-form recovery curve under step refinement
        rho = kp.rho_S_eq
        eta = 6.3e-16  # slow secretion so the transient spans months
        p = SpeciesParams(eta_E=eta)
        tau = p.c_E_th / (eta * rho)
        t_end, results = 240.0, {}
        for dt in (1.0, 0.5, 0.25, 0.125, 0.0625):
            c = 0.0
            n = int(round(t_end / dt))
            for _ in range(n):
                c = (c + dt * eta * rho) / (1.0 + dt * eta * rho / p.c_E_th)
            results[dt] = c
        exact = kin.ecm_closed_form(t_end, rho, p)
        errs = [abs(results[dt] - exact) for dt in (1.0, 0.5, 0.25)]
        assert errs[0] > errs[1] > errs[2]  # first-order convergence
        rich = (8 * results[0.25] - 6 * results[0.5] + results[1.0]) / 3.0
        assert abs(rich - exact) / exact < 1e-4

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SpeciesParams(c_E_th=1e-9, c_E_eq=7e-9).validate()
        with pytest.raises(ValueError):
            SpeciesParams(D_P=-0.1).validate()
