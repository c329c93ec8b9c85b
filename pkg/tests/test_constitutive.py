import numpy as np
import pytest

from restenofem import constitutive as co
from restenofem.constitutive import (
    ANISOTROPIC,
    ISOTROPIC,
    StructuralParams,
    fiber_strain,
    free_energy,
    growth_direction,
    growth_from_density,
    stress_and_tangent,
    structural_tensor,
)

A41 = np.deg2rad(41.0)
FIB_X = (np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
FIB_PM41 = (
    np.array([np.cos(A41), np.sin(A41), 0.0]),
    np.array([np.cos(A41), -np.sin(A41), 0.0]),
)


def params(model=ISOTROPIC, kappa=0.1):
    return StructuralParams(kappa=kappa, growth_model=model)


class TestStructuralTensor:
    def test_kappa_zero_aligned(self):
        H = structural_tensor([1.0, 0.0, 0.0], 0.0)
        assert np.allclose(H, np.diag([1.0, 0.0, 0.0]))

    def test_kappa_third_isotropic(self):
        H = structural_tensor([0.3, -0.5, np.sqrt(1 - 0.34)], 1.0 / 3.0)
        assert np.allclose(H, np.eye(3) / 3.0)

    def test_direct_substitution(self):
        H = structural_tensor([0.0, 1.0, 0.0], 0.1)
        assert np.allclose(H, np.diag([0.1, 0.8, 0.1]))

    def test_trace_one_over_kappa_range(self, rng):
        for kappa in np.linspace(0.0, 1.0 / 3.0, 12):
            v = rng.standard_normal(3)
            v /= np.linalg.norm(v)
            assert np.isclose(np.trace(structural_tensor(v, kappa)), 1.0)

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            structural_tensor([1.0, 1.0, 0.0], 0.1)


class TestFiberStrain:
    def test_identity_gives_zero(self, rng):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        H = structural_tensor(v, 0.17)
        assert abs(fiber_strain(np.eye(3), H)) < 1e-14

    def test_uniaxial(self):
        lam2 = 1.3**2
        H = structural_tensor([1.0, 0.0, 0.0], 0.0)
        assert np.isclose(fiber_strain(np.diag([lam2, 1.0, 1.0]), H), lam2 - 1.0)

    def test_compression_gated_out_of_energy(self):
        sp = params(kappa=0.0)
        H = structural_tensor([1.0, 0.0, 0.0], 0.0)
        F = np.diag([0.9, 1.0, 1.0])  # C = diag(0.81, 1, 1)
        assert fiber_strain(F.T @ F, H) < 0.0
        g = growth_from_density(sp.rho_S_eq, sp)
        psi = free_energy(F, g, sp.c_E_eq, H, H, sp)
        g2 = growth_from_density(sp.rho_S_eq, sp)
        psi_nofiber = free_energy(F, g2, 0.0, H, H, sp)
        assert np.isclose(psi, psi_nofiber)


class TestGrowth:
    def test_equilibrium_density_both_models(self):
        for model in (ISOTROPIC, ANISOTROPIC):
            sp = params(model, kappa=0.0)
            g = growth_from_density(sp.rho_S_eq, sp, gamma=np.array([0.0, 0.0, 1.0]))
            assert np.isclose(g.theta, 1.0)
            assert np.allclose(g.Ug, np.eye(3))
            assert np.isclose(g.Jg, 1.0)

    def test_isotropic_cube_root(self):
        sp = params(ISOTROPIC)
        g = growth_from_density(8.0 * sp.rho_S_eq, sp)
        assert np.isclose(g.theta, 2.0)
        assert np.isclose(g.Jg, 8.0)

    def test_anisotropic_rank_one_determinant(self):
        sp = params(ANISOTROPIC, kappa=0.0)
        gamma = np.array([0.0, 0.0, 1.0])
        g = growth_from_density(1.5 * sp.rho_S_eq, sp, gamma)
        assert np.isclose(np.linalg.det(g.Ug), 1.5)
        assert np.isclose(g.Jg, 1.5)

    def test_floor_clamp_flags(self):
        sp = params(ISOTROPIC)
        g = growth_from_density(1e-3 * sp.rho_S_eq, sp)
        assert g.clamped
        assert np.isclose(g.theta, 0.5)

    def test_rejects_nonpositive_density(self):
        with pytest.raises(ValueError):
            growth_from_density(0.0, params())


class TestGrowthDirection:
    def test_cross_product(self):
        g = growth_direction(np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))
        assert np.allclose(g, [0, 0, 1])

    def test_pm41_in_plane(self):
        g = growth_direction(*FIB_PM41)
        assert np.allclose(np.abs(g), [0, 0, 1])

    def test_swap_negates_but_Ug_even(self):
        sp = params(ANISOTROPIC, kappa=0.0)
        g1 = growth_direction(*FIB_PM41)
        g2 = growth_direction(FIB_PM41[1], FIB_PM41[0])
        assert np.allclose(g1, -g2)
        u1 = growth_from_density(1.4 * sp.rho_S_eq, sp, g1).Ug
        u2 = growth_from_density(1.4 * sp.rho_S_eq, sp, g2).Ug
        assert np.allclose(u1, u2)

    def test_parallel_rejected(self):
        with pytest.raises(ValueError):
            growth_direction(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))


class TestFreeEnergy:
    def test_reference_state_zero(self):
        sp = params()
        H = structural_tensor(FIB_PM41[0], sp.kappa)
        g = growth_from_density(sp.rho_S_eq, sp)
        assert abs(free_energy(np.eye(3), g, sp.c_E_eq, H, H, sp)) < 1e-15

    def test_zero_ecm_kills_fiber_energy(self):
        sp = params(kappa=0.0)
        H = structural_tensor([1.0, 0.0, 0.0], 0.0)
        g = growth_from_density(sp.rho_S_eq, sp)
        F = np.diag([1.3, 1.0, 1.0])
        psi = free_energy(F, g, 0.0, H, H, sp)
        sp_nofiber = StructuralParams(kappa=0.0, k1_bar=0.0)
        psi_iso = free_energy(F, g, sp.c_E_eq, H, H, sp_nofiber)
        assert np.isclose(psi, psi_iso)

    def test_uniaxial_value_frozen_oracle(self):
        # independent scalar evaluation at F = diag(1.1, 1, 1), kappa = 0,
        # both fibers along X, block parameters, healthy ECM
        sp = params(kappa=0.0)
        H = structural_tensor([1.0, 0.0, 0.0], 0.0)
        g = growth_from_density(sp.rho_S_eq, sp)
        psi = free_energy(np.diag([1.1, 1.0, 1.0]), g, sp.c_E_eq, H, H, sp)
        assert psi > 0.0
        assert np.isclose(psi, 0.05669425601486267, rtol=1e-12)

    def test_rejects_inverted(self):
        sp = params()
        H = structural_tensor([1.0, 0.0, 0.0], sp.kappa)
        g = growth_from_density(sp.rho_S_eq, sp)
        with pytest.raises(ValueError):
            free_energy(np.diag([-1.0, 1.0, 1.0]), g, sp.c_E_eq, H, H, sp)

    def test_nonnegative_without_growth(self, rng):
        # polyconvex matrix + nonnegative exponential fiber term
        sp = params(kappa=0.13)
        H1 = structural_tensor(FIB_PM41[0], sp.kappa)
        H2 = structural_tensor(FIB_PM41[1], sp.kappa)
        g = growth_from_density(np.ones(200) * sp.rho_S_eq, sp)
        F = np.eye(3) + 0.2 * rng.standard_normal((200, 3, 3))
        F = F[np.linalg.det(F) > 0.2]
        gg = growth_from_density(np.ones(len(F)) * sp.rho_S_eq, sp)
        psi = free_energy(F, gg, sp.c_E_eq, H1, H2, sp)
        assert np.all(psi >= -1e-14)


class TestStressAndTangent:
    def test_reference_stress_free(self):
        for model, kappa, fib in ((ISOTROPIC, 0.1, FIB_PM41), (ANISOTROPIC, 0.0, FIB_PM41)):
            sp = params(model, kappa)
            st = stress_and_tangent(np.eye(3), sp.rho_S_eq, sp.c_E_eq, fib, sp)
            assert np.allclose(st.P, 0.0, atol=1e-16)

    def test_grown_state_stress_free_anisotropic(self):
        # F = Ug with fibers orthogonal to the growth direction: zero energy
        # and zero stress (defining property of the stress-free growth theory)
        sp = params(ANISOTROPIC, kappa=0.0)
        gamma = growth_direction(*FIB_PM41)
        rho = 1.7 * sp.rho_S_eq
        g = growth_from_density(rho, sp, gamma)
        H1 = structural_tensor(FIB_PM41[0], 0.0)
        H2 = structural_tensor(FIB_PM41[1], 0.0)
        psi = free_energy(g.Ug, g, sp.c_E_eq, H1, H2, sp)
        assert abs(psi) < 1e-14
        st = stress_and_tangent(g.Ug, rho, sp.c_E_eq, FIB_PM41, sp)
        assert np.max(np.abs(st.P)) < 1e-12

    def test_isotropic_grown_state_retains_residual_stress(self):
        # isotropic matrix growth stretches the fibers: grown tissue not stress-free
        sp = params(ISOTROPIC, kappa=0.1)
        rho = 1.7 * sp.rho_S_eq
        g = growth_from_density(rho, sp)
        st = stress_and_tangent(g.Ug, rho, sp.c_E_eq, FIB_PM41, sp)
        assert np.linalg.norm(st.P) > 1e-6

    def test_volume_split_identity(self, rng):
        # J = J* Jg for every evaluated state
        for model, kappa in ((ISOTROPIC, 0.1), (ANISOTROPIC, 0.0)):
            sp = params(model, kappa)
            gamma = growth_direction(*FIB_PM41)
            F = np.eye(3) + 0.1 * rng.standard_normal((50, 3, 3))
            F = F[np.linalg.det(F) > 0.3]
            rho = sp.rho_S_eq * rng.uniform(0.6, 2.0, len(F))
            g = growth_from_density(rho, sp, np.broadcast_to(gamma, (len(F), 3)))
            J = np.linalg.det(F)
            Ginv = np.linalg.inv(g.Ug)
            Cstar = np.einsum("nik,nmk,nml,nlj->nij", Ginv, F, F, Ginv)
            Jstar = np.sqrt(np.linalg.det(Cstar))
            assert np.max(np.abs(J - Jstar * g.Jg) / J) < 1e-12


def _random_admissible(rng, sp, n):
    gamma = growth_direction(*FIB_PM41)
    H1 = structural_tensor(FIB_PM41[0], sp.kappa)
    H2 = structural_tensor(FIB_PM41[1], sp.kappa)
    F, rho, cE = [], [], []
    while len(F) < n:
        cand = np.eye(3) + 0.15 * rng.standard_normal((3, 3))
        if np.linalg.det(cand) < 0.4:
            continue
        C = cand.T @ cand
        E1, E2 = fiber_strain(C, H1), fiber_strain(C, H2)
        # keep clear of the Macaulay kink where central differences straddle it
        if min(abs(E1), abs(E2)) < 1e-3:
            continue
        F.append(cand)
        rho.append(sp.rho_S_eq * rng.uniform(0.7, 2.2))
        cE.append(sp.c_E_eq * rng.uniform(0.3, 1.2))
    packs = np.array(F), np.array(rho), np.array(cE)
    return packs + (np.broadcast_to(H1, (n, 3, 3)), np.broadcast_to(H2, (n, 3, 3)),
                    np.broadcast_to(gamma, (n, 3)))


@pytest.mark.parametrize("model,kappa", [(ISOTROPIC, 0.1), (ISOTROPIC, 0.0), (ANISOTROPIC, 0.0)])
def test_all_sensitivities_match_central_differences(rng, model, kappa):
    """P vs FD(psi), A vs FD(P), dP/drho and dP/dcE vs FD(P); 100+ states."""
    sp = params(model, kappa)
    n = 110
    F, rho, cE, H1, H2, gamma = _random_admissible(rng, sp, n)
    gam = gamma if model == ANISOTROPIC else None
    st = co.stress_tangent_core(F, rho, cE, H1, H2, gam, sp)

    def psi(Fv, r, c):
        g = growth_from_density(r, sp, gam)
        return free_energy(Fv, g, c, H1, H2, sp)

    h = 1e-6
    Pfd = np.zeros_like(st.P)
    Afd = np.zeros_like(st.A)
    for i in range(3):
        for j in range(3):
            dF = np.zeros((3, 3))
            dF[i, j] = h
            Pfd[:, i, j] = (psi(F + dF, rho, cE) - psi(F - dF, rho, cE)) / (2 * h)
            stp = co.stress_tangent_core(F + dF, rho, cE, H1, H2, gam, sp)
            stm = co.stress_tangent_core(F - dF, rho, cE, H1, H2, gam, sp)
            Afd[..., i, j] = (stp.P - stm.P) / (2 * h)
    assert np.max(np.abs(Pfd - st.P)) <= 1e-5 * np.max(np.abs(st.P))
    assert np.max(np.abs(Afd - st.A)) <= 1e-5 * np.max(np.abs(st.A))

    hr = 1e-6 * sp.rho_S_eq
    stp = co.stress_tangent_core(F, rho + hr, cE, H1, H2, gam, sp)
    stm = co.stress_tangent_core(F, rho - hr, cE, H1, H2, gam, sp)
    fd = (stp.P - stm.P) / (2 * hr)
    assert np.max(np.abs(fd - st.dP_drho)) <= 1e-5 * np.max(np.abs(st.dP_drho))

    hc = 1e-6 * sp.c_E_eq
    stp = co.stress_tangent_core(F, rho, cE + hc, H1, H2, gam, sp)
    stm = co.stress_tangent_core(F, rho, cE - hc, H1, H2, gam, sp)
    fd = (stp.P - stm.P) / (2 * hc)
    assert np.max(np.abs(fd - st.dP_dcE)) <= 1e-5 * np.max(np.abs(st.dP_dcE))


def test_macaulay_gate_compression_leaves_energy_unchanged():
    sp = params(kappa=0.0)
    H = structural_tensor([1.0, 0.0, 0.0], 0.0)
    g = growth_from_density(sp.rho_S_eq, sp)
    base = free_energy(np.diag([0.95, 1.0, 1.0]), g, sp.c_E_eq, H, H, sp)
    more = free_energy(np.diag([0.90, 1.0, 1.0]), g, sp.c_E_eq, H, H, sp)
    # fiber contribution identical (zero); only the matrix part moves
    sp0 = StructuralParams(kappa=0.0, k1_bar=0.0)
    assert np.isclose(base - free_energy(np.diag([0.95, 1, 1]), g, sp.c_E_eq, H, H, sp0), 0.0)
    assert np.isclose(more - free_energy(np.diag([0.90, 1, 1]), g, sp.c_E_eq, H, H, sp0), 0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        StructuralParams(kappa=0.5).validate()
    with pytest.raises(ValueError):
        StructuralParams(mu=-1.0).validate()
    with pytest.raises(ValueError):
        StructuralParams(growth_model=ANISOTROPIC, kappa=0.2).validate()
    StructuralParams(growth_model=ANISOTROPIC, kappa=0.0).validate()
