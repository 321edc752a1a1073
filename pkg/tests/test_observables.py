import math

import numpy as np
import pytest

from yukawa_shells.errors import FitError
from yukawa_shells.fock import Discretization, ModeSet, build_basis, build_modes
from yukawa_shells.hamiltonian import assemble
from yukawa_shells.model import ModelParams, free_nucleon_energy
from yukawa_shells.multiscale import run_trajectory
from yukawa_shells.observables import (
    auxiliary_scale,
    boson_cap_scan,
    damping_product,
    fd_velocity,
    fit_power_law,
    hf_velocity,
    momentum_sweep,
    ratio_sweep,
    self_energy_sweep,
    velocity_correction_terms,
    velocity_table,
)
from yukawa_shells.spectral import SolverOptions, ground_state

DISC = Discretization(radial_order=1, angular_order=6, b_max=2)
FAST = SolverOptions(contraction_probes=0)


class TestHfVelocity:
    def test_free_theory_exact(self):
        params = ModelParams(g=0.0, n_steps=3)
        traj = run_trajectory((0, 0, 0.2), params, DISC, FAST)
        v = hf_velocity(traj.final_state, traj.p, traj.final_basis, params.m)
        free = np.array([0, 0, 0.2]) / free_nucleon_energy((0, 0, 0.2), 1.0)
        np.testing.assert_allclose(v, free, atol=1e-12)

    def test_parity_zero_at_rest(self):
        params = ModelParams(lambda_=8, n_steps=3, g=0.03)
        traj = run_trajectory((0, 0, 0.0), params, DISC, FAST)
        v = hf_velocity(traj.final_state, traj.p, traj.final_basis, params.m)
        np.testing.assert_allclose(v, np.zeros(3), atol=1e-12)

    def test_three_state_hand_summation(self):
        # one mode along z: states (), (0,), (0,0); diagonal sum by hand
        params = ModelParams(m=1.0, mu=2.0, g=0.1, lambda_=2, n_steps=1)
        ms = ModeSet(k=[[0.0, 0.0, 1.0]], weights=[1.0], shell_index=[1], mu=2.0)
        basis = build_basis(ms, 1, 2)
        p = np.array([0.0, 0.0, 0.25])
        psi = np.array([0.8, 0.5, math.sqrt(1 - 0.8**2 - 0.5**2)])
        expected_z = (
            psi[0] ** 2 * (0.25 / math.sqrt(0.25**2 + 1))
            + psi[1] ** 2 * (-0.75 / math.sqrt(0.75**2 + 1))
            + psi[2] ** 2 * (-1.75 / math.sqrt(1.75**2 + 1))
        )
        v = hf_velocity(psi, p, basis, 1.0)
        assert v[0] == 0.0 and v[1] == 0.0
        assert v[2] == pytest.approx(expected_z, rel=1e-14)

    def test_componentwise_bound(self):
        params = ModelParams(lambda_=8, n_steps=3)
        ms = build_modes(params, 1, 6)
        basis = build_basis(ms, 3, 2)
        table = velocity_table(basis, (0.1, -0.2, 0.15), 1.0)
        assert np.all(np.abs(table) <= 1.0)
        rng = np.random.default_rng(4)
        for _ in range(5):
            psi = rng.standard_normal(basis.dim)
            psi /= np.linalg.norm(psi)
            v = hf_velocity(psi, (0.1, -0.2, 0.15), basis, 1.0)
            assert np.all(np.abs(v) <= 1.0 + 1e-12)


class TestFdVelocity:
    def test_free_theory_central_difference(self):
        params = ModelParams(g=0.0, lambda_=4, n_steps=2)
        h = 1e-2
        v = fd_velocity((0, 0, 0.2), params, DISC, FAST, h=h)
        exact = np.array([0, 0, 0.2]) / free_nucleon_energy((0, 0, 0.2), 1.0)
        # central difference of sqrt(p^2+m^2) carries an O(h^2) bias
        np.testing.assert_allclose(v, exact, atol=5 * h * h)

    def test_odd_under_momentum_reflection(self):
        params = ModelParams(lambda_=4, n_steps=2, g=0.05)
        disc = Discretization(radial_order=1, angular_order=2, b_max=1)
        plus = fd_velocity((0, 0, 0.1), params, disc, FAST, h=5e-3)
        minus = fd_velocity((0, 0, -0.1), params, disc, FAST, h=5e-3)
        np.testing.assert_allclose(plus, -minus, atol=1e-9)

    def test_step_bound_enforced(self):
        params = ModelParams()
        with pytest.raises(ValueError, match="p_max"):
            fd_velocity((0, 0, 0.299), params, DISC, FAST, h=5e-3)

    def test_agreement_with_diagonal_expectation(self):
        params = ModelParams(lambda_=8, n_steps=3, g=0.04)
        traj = run_trajectory((0, 0, 0.2), params, DISC, FAST)
        hf = hf_velocity(traj.final_state, traj.p, traj.final_basis, params.m)
        fd = fd_velocity((0, 0, 0.2), params, DISC, FAST, h=5e-3)
        assert np.max(np.abs(hf - fd)) <= 1e-4


class TestPowerLawFit:
    def test_exact_synthetic_law(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0])
        ys = 3.0 * xs**2.5
        fit = fit_power_law(xs, ys)
        assert fit.exponent == pytest.approx(2.5, abs=1e-12)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-12)
        assert fit.residual <= 1e-12
        assert fit.n_points == 4

    def test_zero_signal_refused(self):
        with pytest.raises(FitError, match="zero signal"):
            fit_power_law([1, 2, 4, 8], [0.0, 0.0, 0.0, 0.0])

    def test_too_few_points_refused(self):
        with pytest.raises(FitError, match=">= 2"):
            fit_power_law([1.0], [2.0])

    def test_negative_values_refused(self):
        with pytest.raises(FitError, match="positive"):
            fit_power_law([1, 2, 4], [1.0, -2.0, 3.0])


class TestDampingProduct:
    def test_free_theory_is_unity(self):
        params = ModelParams(g=0.0, n_steps=3)
        traj = run_trajectory((0, 0, 0.2), params, DISC, FAST)
        product, exponent = damping_product(traj)
        assert product == 1.0
        assert exponent == 0.0

    def test_product_in_unit_interval(self):
        params = ModelParams(lambda_=8, n_steps=3, g=0.05)
        traj = run_trajectory((0, 0, 0.2), params, DISC, FAST)
        product, exponent = damping_product(traj)
        assert 0.0 < product <= 1.0
        assert exponent < 0.0

    def test_log_product_matches_alpha_sum(self):
        params = ModelParams(lambda_=8, n_steps=3, g=0.05)
        traj = run_trajectory((0, 0, 0.2), params, DISC, FAST)
        product, _ = damping_product(traj)
        g2 = params.g**2
        alpha_sum = sum(r.alpha for r in traj.records[1:])
        alpha_max = max(r.alpha for r in traj.records[1:])
        assert abs(math.log(product) + g2 * alpha_sum) <= g2 * alpha_max * (
            g2 * alpha_sum
        ) + 1e-15


class TestAuxiliaryScale:
    def test_capped_at_cutoff(self):
        params = ModelParams(lambda_=8, n_steps=6)
        # 8 * gamma^3 / 0.2 = 14.14 > 8, so the level caps at the cutoff
        assert auxiliary_scale(params, 4, 0.04, 0.5) == 8.0

    def test_small_epsilon_snaps_to_own_shell(self):
        params = ModelParams(lambda_=8, n_steps=6)
        xi = auxiliary_scale(params, 4, 0.04, 1e-9)
        assert xi == pytest.approx(params.lambda_ * params.gamma**3, rel=1e-12)

    def test_ladder_snap_postcondition(self):
        params = ModelParams(lambda_=8, n_steps=6)
        gamma = params.gamma
        for n in (2, 4, 6):
            for g in (0.01, 0.04, 0.2):
                for eps in (0.1, 0.3, 0.5):
                    xi = auxiliary_scale(params, n, g, eps)
                    target = min(params.lambda_,
                                 params.lambda_ * gamma ** (n - 1) / g**eps)
                    assert xi <= target * (1 + 1e-12)
                    assert target < xi / gamma * (1 + 1e-12)

    def test_epsilon_window_enforced(self):
        with pytest.raises(ValueError, match="epsilon"):
            auxiliary_scale(ModelParams(), 3, 0.04, 0.8)


class TestVelocityCorrections:
    def _pieces(self, params, p):
        ms = build_modes(params, 1, 6)
        basis = build_basis(ms, 2, 2)
        op_prev = assemble(p, 1, params, basis)
        gr = ground_state(op_prev)
        return basis, op_prev, gr

    def test_zero_coupling_vanishes(self):
        params = ModelParams(lambda_=8, n_steps=2, g=0.0)
        basis, op_prev, gr = self._pieces(params, (0, 0, 0.2))
        a, b = velocity_correction_terms(gr.vector, op_prev, gr.energy, 2,
                                         params, ground_vec=gr.vector)
        np.testing.assert_allclose(a, np.zeros(3), atol=1e-15)
        np.testing.assert_allclose(b, np.zeros(3), atol=1e-15)

    def test_parity_vanishes_at_rest(self):
        params = ModelParams(lambda_=8, n_steps=2, g=0.05)
        basis, op_prev, gr = self._pieces(params, (0, 0, 0.0))
        a, b = velocity_correction_terms(gr.vector, op_prev, gr.energy, 2,
                                         params, ground_vec=gr.vector)
        np.testing.assert_allclose(a, np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(b, np.zeros(3), atol=1e-12)

    def test_direct_term_grows_toward_infrared(self):
        # the bound scales with the inverse shell energy
        params = ModelParams(lambda_=8, n_steps=6, g=0.05)
        traj = run_trajectory((0, 0, 0.2), params, DISC, FAST, collect_ab=True)
        norms = [float(np.linalg.norm(a)) for a, _ in traj.ab_terms]
        assert norms[-1] > norms[0]


class TestSweeps:
    def test_mini_self_energy_sweep(self):
        params = ModelParams(lambda_=8, n_steps=6, g=0.05)
        disc = Discretization(radial_order=1, angular_order=6, b_max=1)
        res = self_energy_sweep(params, (8, 16, 32, 64), disc, FAST)
        assert res.axis == "lambda"
        assert res.fit is not None and res.fit.n_points == 4
        assert 0.8 <= res.fit.exponent <= 1.3  # asymptotics sharpen at larger cutoffs
        assert all(pt.observable > 0 for pt in res.points)

    def test_sweep_needs_four_points(self):
        params = ModelParams()
        with pytest.raises(FitError, match=">= 4"):
            self_energy_sweep(params, (8, 16), DISC, FAST)

    def test_momentum_sweep_free_velocities(self):
        params = ModelParams(g=0.0, lambda_=4, n_steps=2)
        res = momentum_sweep(params, (0.05, 0.1, 0.15, 0.2), DISC, FAST)
        for pt in res.points:
            free = pt.value / math.sqrt(pt.value**2 + 1.0)
            assert pt.observable == pytest.approx(free, abs=1e-12)

    def test_ratio_sweep_reports_alpha(self):
        params = ModelParams(lambda_=8, g=0.03)
        disc = Discretization(radial_order=1, angular_order=6, b_max=1)
        res = ratio_sweep(params, (0.6, 0.71, 0.8), disc, FAST)
        assert all(pt.observable > 0 for pt in res.points)
        assert res.fit is not None


class TestBosonCapScan:
    def test_increments_shrink(self):
        params = ModelParams(lambda_=4, n_steps=2, g=0.05)
        rows = boson_cap_scan(params, DISC, FAST, caps=(1, 2, 3))
        assert [r["b_max"] for r in rows] == [1, 2, 3]
        d12 = abs(rows[1]["energy"] - rows[0]["energy"])
        d23 = abs(rows[2]["energy"] - rows[1]["energy"])
        assert d23 < d12


class TestVelocityResult:
    def test_measure_velocity_bundle(self):
        from yukawa_shells.observables import measure_velocity

        params = ModelParams(lambda_=4, n_steps=3, g=0.05)
        disc = Discretization(radial_order=1, angular_order=2, b_max=1)
        traj = run_trajectory((0, 0, 0.1), params, disc, FAST)
        res = measure_velocity(traj, h=5e-3)
        assert res.scale == 3
        np.testing.assert_allclose(
            res.free_velocity,
            np.array([0, 0, 0.1]) / free_nucleon_energy((0, 0, 0.1), 1.0),
            atol=1e-15)
        assert np.max(np.abs(res.hf_velocity - res.fd_velocity)) <= 1e-4
        assert np.all(np.abs(res.hf_velocity) <= 1.0)

    def test_fd_study_reports_both_gradients(self):
        from yukawa_shells.observables import fd_velocity_study

        params = ModelParams(g=0.0, lambda_=4, n_steps=3)
        disc = Discretization(radial_order=1, angular_order=2, b_max=1)
        study = fd_velocity_study((0, 0, 0.1), params, disc, FAST,
                                  h_values=(1e-2, 5e-3))
        assert study["h"] == (1e-2, 5e-3)
        v1, v2 = study["gradients"]
        exact = 0.1 / math.sqrt(1.01)
        # the coarser step carries the larger quadratic bias
        assert abs(v1[2] - exact) >= abs(v2[2] - exact) - 1e-12
        assert np.all(study["tolerance"] >= 1e-4)
