import warnings

import numpy as np
import pytest
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from btforms.massop import (
    GaussianModel,
    InteractionKernel,
    LocalGaussianWellModel,
    ModelRejectionError,
    NodeCollisionError,
    QuadratureGrid,
    YamaguchiModel,
    bound_state_pole_consistency,
    build_kernel,
    dmass_dk,
    invariant_mass,
    mass_operator_matrix,
    model_from_spec,
    momentum_of_mass,
    solve_bound_states,
    solve_scattering,
)

M1 = M2 = 939.0
THRESHOLD = M1 + M2

# frozen reference models; parameters chosen against the analytic oracles below
YAMAGUCHI = YamaguchiModel(strength=47403.458, beta=300.0)
YAMAGUCHI_BOUND_MASS = 1875.7746232473723  # root of the rank-1 condition
GAUSSIAN = GaussianModel(strength=7.017e-06, range_=380.0)
GAUSSIAN_BINDING = 5.998702660398067  # root of the rank-1 condition
GAUSSIAN_WEAK = GaussianModel(strength=1.5e-07, range_=380.0)
DEEP_WELL = LocalGaussianWellModel(depth=150.0, range_=150.0)


def grid64():
    return QuadratureGrid(64, 300.0, M1, M2)


# ---------------------------------------------------------------------------
# independent oracles


def separable_binding_oracle(form_factor_sq, strength, lo=THRESHOLD - 120.0):
    """Root of 1 - strength * int k^2 g^2 / (m(k) - lam) dk below threshold."""

    def condition(lam):
        f = lambda k: k * k * form_factor_sq(k) / (invariant_mass(k, M1, M2) - lam)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            v1, _ = quad(f, 0.0, 3000.0, limit=400, epsabs=0.0, epsrel=1e-12)
            v2, _ = quad(f, 3000.0, np.inf, limit=400, epsabs=0.0, epsrel=1e-12)
        return 1.0 - strength * (v1 + v2)

    return brentq(condition, lo, THRESHOLD - 1e-9, xtol=1e-10)


def yamaguchi_smatrix_oracle(k0, strength, beta):
    """Closed-form rank-1 S = (1 - i pi rho K)/(1 + i pi rho K) at k0."""
    m0 = float(invariant_mass(k0, M1, M2))
    mp0 = float(dmass_dk(k0, M1, M2))
    gsq = lambda k: 1.0 / (k * k + beta * beta) ** 2
    w10, w20 = np.hypot(k0, M1), np.hypot(k0, M2)

    def h(k):
        # (k0 - k)/(m0 - m(k)) rewritten without cancellation
        w1, w2 = np.hypot(k, M1), np.hypot(k, M2)
        denom = (k0 + k) * (1.0 / (w10 + w1) + 1.0 / (w20 + w2))
        return k * k * gsq(k) / denom

    v1, _ = quad(h, 0.0, 2 * k0, weight="cauchy", wvar=k0, limit=400, epsabs=0.0, epsrel=1e-12)
    v2, _ = quad(
        lambda k: k * k * gsq(k) / (m0 - float(invariant_mass(k, M1, M2))),
        2 * k0,
        np.inf,
        limit=400,
        epsabs=0.0,
        epsrel=1e-12,
    )
    pv = -v1 + v2
    kmat = -strength * gsq(k0) / (1.0 + strength * pv)
    rho = k0 * k0 / mp0
    return (1.0 - 1j * np.pi * rho * kmat) / (1.0 + 1j * np.pi * rho * kmat)


def born_phase(model, k0):
    rho = k0 * k0 / float(dmass_dk(k0, M1, M2))
    return -np.pi * rho * float(model(np.asarray(k0), np.asarray(k0)))


# ---------------------------------------------------------------------------


class TestQuadratureGrid:
    def test_nodes_increasing_weights_positive(self):
        g = grid64()
        assert np.all(np.diff(g.k) > 0)
        assert np.all(g.w > 0)

    def test_gaussian_moment_reproduced(self):
        # int_0^inf exp(-k^2/c^2) k^2 dk = sqrt(pi) c^3 / 4
        for n in (48, 64, 96):
            g = QuadratureGrid(n, 300.0, M1, M2)
            val = np.sum(g.weights_k2 * np.exp(-(g.k ** 2) / g.scale**2))
            exact = np.sqrt(np.pi) * g.scale**3 / 4.0
            assert abs(val - exact) <= 1e-10 * exact

    def test_mass_chart_monotonic(self):
        g = grid64()
        assert np.all(np.diff(g.mass) > 0)
        assert np.all(g.dm_dk > 0)
        # analytic inverse round trip; near threshold the m -> k inversion
        # loses half the digits to cancellation, so judge in the m chart
        k_back = momentum_of_mass(g.mass, M1, M2)
        np.testing.assert_allclose(
            invariant_mass(k_back, M1, M2), g.mass, rtol=1e-12
        )
        np.testing.assert_allclose(k_back, g.k, rtol=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            QuadratureGrid(64, -1.0, M1, M2)
        with pytest.raises(ValueError):
            QuadratureGrid(1, 300.0, M1, M2)


class TestKernels:
    def test_zero_strength_gives_zero_kernel(self):
        kern = build_kernel(GaussianModel(strength=0.0, range_=380.0), grid64())
        assert np.max(np.abs(kern.values)) == 0.0

    def test_yamaguchi_is_rank_one(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        svals = np.linalg.svd(kern.values[0, :, 0, :], compute_uv=False)
        assert svals[1] <= 1e-12 * svals[0]

    def test_hermiticity_random_parameters(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            mod = GaussianModel(strength=rng.uniform(1e-7, 1e-5), range_=rng.uniform(150, 500))
            kern = build_kernel(mod, grid64())
            assert kern.hermiticity_residual() <= 1e-14 * np.max(np.abs(kern.values))

    def test_kernel_has_no_form_tag(self):
        # the reduced problem is form independent; the type must not admit a form
        fields = set(InteractionKernel.__dataclass_fields__)
        assert "form" not in fields
        assert fields == {"j", "labels", "grid", "values", "evaluate", "provenance"}

    def test_model_registry(self):
        assert isinstance(model_from_spec("yamaguchi", {"strength": 1.0, "beta": 2.0}), YamaguchiModel)
        assert isinstance(model_from_spec("free", {}), GaussianModel)
        with pytest.raises(ValueError):
            model_from_spec("woods-saxon", {})


class TestBoundStates:
    def test_free_spectrum_equals_grid_masses(self):
        g = grid64()
        kern = build_kernel(GaussianModel(strength=0.0, range_=380.0), g)
        spec = solve_bound_states(kern)
        np.testing.assert_allclose(np.sort(spec.eigenvalues), np.sort(g.mass), rtol=1e-12)
        assert spec.bound_masses.size == 0

    def test_yamaguchi_matches_analytic_root(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        spec = solve_bound_states(kern)
        assert spec.bound_masses.size == 1
        oracle = separable_binding_oracle(
            lambda k: 1.0 / (k * k + YAMAGUCHI.beta**2) ** 2, YAMAGUCHI.strength
        )
        assert abs(oracle - YAMAGUCHI_BOUND_MASS) < 1e-7  # frozen value still current
        assert abs(spec.bound_masses[0] - oracle) <= 1e-8 * oracle

    def test_gaussian_matches_analytic_root(self):
        kern = build_kernel(GAUSSIAN, grid64())
        spec = solve_bound_states(kern)
        oracle = separable_binding_oracle(
            lambda k: np.exp(-2.0 * k * k / GAUSSIAN.range_**2), GAUSSIAN.strength
        )
        assert abs((THRESHOLD - oracle) - GAUSSIAN_BINDING) < 1e-7
        assert abs(spec.bound_masses[0] - oracle) <= 1e-8 * oracle

    def test_gaussian_grid_self_convergence(self):
        vals = []
        for n in (48, 96):
            kern = build_kernel(GAUSSIAN, QuadratureGrid(n, 300.0, M1, M2))
            vals.append(solve_bound_states(kern).bound_masses[0])
        assert abs(vals[0] - vals[1]) <= 1e-7 * vals[1]

    def test_wavefunctions_orthonormal_under_grid_measure(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        spec = solve_bound_states(kern)
        wt = spec.grid.weights_k2
        phi0 = spec.wavefunction_k(0)[0]
        phi5 = spec.wavefunction_k(5)[0]
        assert abs(np.sum(wt * phi0 * phi0) - 1.0) <= 1e-10
        assert abs(np.sum(wt * phi0 * phi5)) <= 1e-10

    def test_mass_chart_wavefunction_normalized(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        spec = solve_bound_states(kern)
        psi = spec.wavefunction_m(0)[0]
        wm = spec.grid.w * spec.grid.dm_dk  # quadrature for the dm measure
        assert abs(np.sum(wm * psi * psi) - 1.0) <= 1e-10

    def test_expand_synthesize_round_trip(self):
        kern = build_kernel(GAUSSIAN, grid64())
        spec = solve_bound_states(kern)
        g = np.exp(-spec.grid.k**2 / 200.0**2).reshape(1, -1)
        coeffs = spec.expand(g)
        back = spec.synthesize(coeffs)
        np.testing.assert_allclose(back, g, rtol=1e-10, atol=1e-14)

    def test_negative_mass_operator_rejected(self):
        deep = LocalGaussianWellModel(depth=300.0, range_=150.0)
        kern = build_kernel(deep, QuadratureGrid(96, 300.0, M1, M2))
        with pytest.raises(ModelRejectionError):
            solve_bound_states(kern)


class TestScattering:
    ENERGIES = np.linspace(40.0, 700.0, 20)

    def test_free_phase_shifts_vanish(self):
        kern = build_kernel(GaussianModel(strength=0.0, range_=380.0), grid64())
        sol = solve_scattering(kern, self.ENERGIES)
        np.testing.assert_allclose(sol.phase_shifts, 0.0, atol=1e-14)
        np.testing.assert_allclose(sol.smatrix[:, 0, 0], 1.0, atol=1e-14)

    def test_yamaguchi_matches_closed_form(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        sol = solve_scattering(kern, self.ENERGIES)
        for i, k0 in enumerate(self.ENERGIES):
            oracle = yamaguchi_smatrix_oracle(k0, YAMAGUCHI.strength, YAMAGUCHI.beta)
            assert abs(sol.smatrix[i, 0, 0] - oracle) <= 1e-8

    def test_weak_gaussian_agrees_with_born(self):
        kern = build_kernel(GAUSSIAN_WEAK, grid64())
        sol = solve_scattering(kern, self.ENERGIES)
        deltas = sol.phase_shifts
        assert np.max(np.abs(deltas)) < 0.05
        for i, k0 in enumerate(self.ENERGIES):
            born = born_phase(GAUSSIAN_WEAK, k0)
            assert abs(deltas[i] - born) <= 0.05 * abs(born)

    def test_unitarity_both_models(self):
        for model in (GAUSSIAN, YAMAGUCHI):
            kern = build_kernel(model, grid64())
            sol = solve_scattering(kern, self.ENERGIES)
            assert sol.unitarity_defect() <= 1e-8

    def test_grid_doubling_self_convergence(self):
        k_test = np.array([75.0, 210.0, 420.0])
        deltas = []
        for n in (64, 128):
            kern = build_kernel(GAUSSIAN, QuadratureGrid(n, 300.0, M1, M2))
            deltas.append(solve_scattering(kern, k_test).phase_shifts)
        assert np.max(np.abs(deltas[0] - deltas[1]) / np.abs(deltas[1])) <= 1e-6

    def test_node_collision_detected(self):
        g = grid64()
        kern = build_kernel(YAMAGUCHI, g)
        with pytest.raises(NodeCollisionError):
            solve_scattering(kern, [g.k[10]])

    def test_standing_wave_solve_is_real(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        sol = solve_scattering(kern, [100.0], outgoing=False)
        assert abs(sol.t_on[0, 0, 0].imag) <= 1e-12 * abs(sol.t_on[0, 0, 0].real)


class TestPoleConsistency:
    def test_single_bound_state_bracketed(self):
        kern = build_kernel(YAMAGUCHI, grid64())
        report = bound_state_pole_consistency(kern, depth=120.0)
        assert len(report.brackets) == 1
        assert report.consistent
        lo, hi = report.brackets[0]
        step = report.scan_masses[1] - report.scan_masses[0]
        assert lo - step <= report.bound_masses[0] <= hi + step

    def test_free_kernel_no_sign_change(self):
        kern = build_kernel(GaussianModel(strength=0.0, range_=380.0), grid64())
        report = bound_state_pole_consistency(kern, depth=120.0)
        assert report.brackets == []
        assert report.consistent

    def test_deepened_well_two_sign_changes(self):
        kern = build_kernel(DEEP_WELL, QuadratureGrid(96, 300.0, M1, M2))
        report = bound_state_pole_consistency(kern, depth=150.0)
        assert len(report.brackets) == 2
        assert report.consistent
        assert solve_bound_states(kern).bound_masses.size == 2


class TestSpectralStructure:
    def test_mass_operator_matrix_symmetric(self):
        kern = build_kernel(GAUSSIAN, grid64())
        mat = mass_operator_matrix(kern)
        np.testing.assert_allclose(mat, mat.T, atol=1e-12 * np.max(np.abs(mat)))


class TestTextTables:
    def test_kernel_table_round_trips(self):
        from btforms.massop import kernel_table, parse_kernel_table

        kern = build_kernel(YAMAGUCHI, QuadratureGrid(16, 300.0, M1, M2))
        text = kernel_table(kern)
        assert text.splitlines()[0] == "d,i,dp,ip,k_mev,kp_mev,value"
        np.testing.assert_array_equal(parse_kernel_table(text), kern.values)

    def test_spectrum_table_columns_and_values(self):
        from btforms.massop import spectrum_table

        kern = build_kernel(YAMAGUCHI, QuadratureGrid(16, 300.0, M1, M2))
        spec = solve_bound_states(kern)
        lines = spectrum_table(spec).splitlines()
        assert lines[0] == "state,eigenvalue_mev,d,i,k_mev,m_mev,psi_k,psi_m"
        first = lines[1].split(",")
        assert float(first[1]) == spec.eigenvalues[0]
        assert float(first[6]) == spec.wavefunction_k(0)[0, 0]
