from __future__ import annotations

import math

import numpy as np
import pytest

from epskip import (
    GaussianMixtureDenoiser,
    RunConfig,
    SamplerMemory,
    Schedule,
    ab2_step,
    apply_step,
    ddim_step,
    euler_step,
    phi1,
    phi2,
    preview_skip_state,
    res2m_coefficients,
    res2m_step,
    run_trajectory,
)


class TestPhiFunctions:
    def test_limits_at_zero(self):
        assert phi1(0.0) == 1.0
        assert phi2(0.0) == 0.5
        assert phi1(1e-9) == pytest.approx(1.0, rel=1e-8)
        assert phi2(1e-9) == pytest.approx(0.5, rel=1e-8)

    def test_unit_values(self):
        assert phi1(1.0) == pytest.approx(math.e - 1.0, rel=1e-12)
        assert phi2(1.0) == pytest.approx(math.e - 2.0, rel=1e-12)

    def test_series_branch_is_continuous(self):
        for h in (1e-4 * 0.999, 1e-4 * 1.001, -1e-4 * 0.999, -1e-4 * 1.001):
            direct = math.expm1(h) / h
            assert phi1(h) == pytest.approx(direct, rel=1e-10)


class TestEulerStep:
    def test_hand_value(self):
        assert euler_step(2.0, 1.0, 1.0, 0.5) == pytest.approx(1.5)

    def test_terminal_returns_denoised_exactly(self, rng):
        x = rng.standard_normal(4)
        denoised = rng.standard_normal(4)
        np.testing.assert_array_equal(euler_step(x, denoised, 0.7, 0.0), denoised)

    def test_fixed_point(self, rng):
        x = rng.standard_normal(4)
        np.testing.assert_array_equal(euler_step(x, x, 1.0, 0.5), x)

    def test_zero_sigma_rejected(self):
        with pytest.raises(ValueError):
            euler_step(1.0, 0.5, 0.0, 0.0)


class TestDdimStep:
    def test_hand_value(self):
        assert ddim_step(2.0, 1.0, 1.0, 0.5) == pytest.approx(1.5)

    def test_terminal_scale_zero(self, rng):
        x = rng.standard_normal(3)
        denoised = rng.standard_normal(3)
        np.testing.assert_array_equal(ddim_step(x, denoised, 0.7, 0.0), denoised)

    def test_unit_scale_identity(self, rng):
        x = rng.standard_normal(3)
        denoised = rng.standard_normal(3)
        np.testing.assert_allclose(ddim_step(x, denoised, 0.7, 0.7), x, rtol=1e-15)

    def test_matches_euler(self, rng):
        # the interpolation and derivative forms are the same map
        for _ in range(50):
            x = rng.standard_normal(5)
            denoised = rng.standard_normal(5)
            sc = float(rng.uniform(0.05, 5.0))
            sn = float(rng.uniform(0.0, sc))
            np.testing.assert_allclose(
                ddim_step(x, denoised, sc, sn),
                euler_step(x, denoised, sc, sn),
                rtol=1e-12,
                atol=1e-12,
            )


class TestAb2Step:
    def test_collapses_to_euler_on_constant_derivative(self, rng):
        x = rng.standard_normal(4)
        denoised = rng.standard_normal(4)
        d = (x - denoised) / 1.0
        np.testing.assert_allclose(
            ab2_step(x, denoised, 1.0, 0.5, d), euler_step(x, denoised, 1.0, 0.5), rtol=1e-14
        )

    def test_hand_value(self):
        out = ab2_step(2.0, 1.0, 1.0, 0.5, np.array(0.0))
        assert out == pytest.approx(1.25)

    def test_no_memory_falls_back(self, rng):
        x = rng.standard_normal(4)
        denoised = rng.standard_normal(4)
        np.testing.assert_array_equal(
            ab2_step(x, denoised, 1.0, 0.5), euler_step(x, denoised, 1.0, 0.5)
        )


class TestRes2mCoefficients:
    def test_sum_is_phi1(self, rng):
        for _ in range(100):
            h = float(rng.uniform(0.01, 3.0))
            h_prev = float(rng.uniform(0.01, 3.0))
            coeffs = res2m_coefficients(h, h_prev)
            assert coeffs is not None
            assert coeffs.coeff1 + coeffs.coeff2 == pytest.approx(phi1(h), rel=1e-10)

    def test_unit_step_values(self):
        coeffs = res2m_coefficients(1.0, 1.0)
        assert coeffs.coeff1 == pytest.approx((math.e - 1.0) + (math.e - 2.0), rel=1e-12)
        assert coeffs.coeff2 == pytest.approx(-(math.e - 2.0), rel=1e-12)
        assert coeffs.c2 == pytest.approx(1.0)

    def test_degenerate_ratio_invalid(self):
        assert res2m_coefficients(1.0, 1e-12) is None
        assert res2m_coefficients(0.0, 1.0) is None
        assert res2m_coefficients(math.nan, 1.0) is None


class TestRes2mStep:
    def test_first_step_is_euler(self, rng):
        x = rng.standard_normal(4)
        denoised = rng.standard_normal(4)
        np.testing.assert_array_equal(
            res2m_step(x, denoised, 1.0, 0.5), euler_step(x, denoised, 1.0, 0.5)
        )

    def test_sum_preserving_rescale(self):
        coeffs = res2m_coefficients(0.8, 1.1)
        for scale in (0.9, 1.0, 1.07, 1.1):
            c1 = coeffs.coeff1 * scale
            c2 = (coeffs.coeff1 + coeffs.coeff2) - c1
            assert c1 + c2 == pytest.approx(coeffs.coeff1 + coeffs.coeff2, abs=1e-12)

    def test_three_step_scalar_run_matches_hand_evaluation(self):
        # standalone evaluation of the exponential two-step formulas, plain math only
        m, c = 0.3, 1.2
        sig = [2.0, 1.2, 0.6, 0.25]

        def denoise(x, sigma):
            return (c * x + sigma * sigma * m) / (c + sigma * sigma)

        x = 1.7
        eps_prev = None
        h_prev = None
        for n in range(3):
            sc, sn = sig[n], sig[n + 1]
            eps = denoise(x, sc) - x
            if eps_prev is None:
                x = x + (-eps / sc) * (sn - sc)
            else:
                h = math.log(sc) - math.log(sn)
                r = h_prev / h
                p1 = math.expm1(h) / h
                p2 = (math.expm1(h) - h) / (h * h)
                b1 = p1 + p2 / r
                b2 = -p2 / r
                x = x + h * (b1 * eps + b2 * eps_prev)
            eps_prev = eps
            h_prev = math.log(sc) - math.log(sn)

        model = GaussianMixtureDenoiser([1.0], [m], [c])
        cfg = RunConfig(sampler="res2m", steps=3, seed=0, shape=(1,))
        out, _ = run_trajectory(cfg, model, Schedule(tuple(sig)), x0=np.array([1.7]))
        assert out[0] == pytest.approx(x, rel=1e-10)


class TestApplyStep:
    def test_memory_evolution(self, rng):
        x = rng.standard_normal(3)
        eps = rng.standard_normal(3)
        memory = SamplerMemory()
        x1, memory = apply_step("ab2", x, eps, 1.0, 0.5, memory, is_real=True)
        np.testing.assert_array_equal(memory.derivative_previous, -eps / 1.0)
        np.testing.assert_array_equal(memory.epsilon_previous, eps)
        assert memory.log_snr_step_previous == pytest.approx(math.log(2.0))
        np.testing.assert_array_equal(memory.derivative_last_real, -eps / 1.0)

    def test_skip_keeps_last_real_derivative(self, rng):
        x = rng.standard_normal(3)
        eps_a = rng.standard_normal(3)
        eps_b = rng.standard_normal(3)
        memory = SamplerMemory()
        _, memory = apply_step("euler", x, eps_a, 1.0, 0.5, memory, is_real=True)
        anchor = memory.derivative_last_real
        _, memory = apply_step("euler", x, eps_b, 0.5, 0.25, memory, is_real=False)
        np.testing.assert_array_equal(memory.derivative_last_real, anchor)
        np.testing.assert_array_equal(memory.derivative_previous, -eps_b / 0.5)

    def test_terminal_step_returns_denoised_for_all_kinds(self, rng):
        x = rng.standard_normal(3)
        eps = rng.standard_normal(3)
        memory = SamplerMemory(
            derivative_previous=rng.standard_normal(3),
            epsilon_previous=rng.standard_normal(3),
            log_snr_step_previous=0.5,
        )
        for kind in ("euler", "ddim", "ab2", "res2m"):
            x_next, _ = apply_step(kind, x, eps, 0.3, 0.0, memory, is_real=False)
            np.testing.assert_array_equal(x_next, x + eps)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            apply_step("heun", np.zeros(2), np.zeros(2), 1.0, 0.5, SamplerMemory(), is_real=True)

    def test_preview_does_not_commit(self, rng):
        x = rng.standard_normal(3)
        eps = rng.standard_normal(3)
        memory = SamplerMemory()
        before = memory
        preview_skip_state("res2m", x, eps, 1.0, 0.5, memory)
        assert memory is before


class TestConvergenceOrders:
    def test_euler_first_order_ab2_second_order(self):
        from epskip import gm_exact_solution, initial_latent, make_simple_schedule

        model = GaussianMixtureDenoiser([1.0], [0.0], [1.0])
        slopes = {}
        for kind in ("euler", "ab2"):
            errs = []
            steps_list = [10, 20, 40, 80]
            for n_steps in steps_list:
                sched = make_simple_schedule(n_steps, 10.0, 0.1)
                x0 = initial_latent((4,), sched.sigmas[0], 3)
                cfg = RunConfig(sampler=kind, steps=n_steps, seed=3, shape=(4,))
                x, _ = run_trajectory(cfg, model, sched, x0=x0)
                exact = gm_exact_solution(model, x0, sched.sigmas[0], sched.sigmas[-1])
                errs.append(np.linalg.norm(x - exact))
            slopes[kind] = -np.polyfit(np.log(steps_list), np.log(errs), 1)[0]
        assert 0.9 <= slopes["euler"] <= 1.1
        assert slopes["ab2"] >= 1.7
