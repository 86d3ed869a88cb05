from __future__ import annotations

import math

import numpy as np
import pytest

from epskip import (
    CountingDenoiser,
    GaussianMixtureDenoiser,
    ScriptedDenoiser,
    gm_exact_solution,
    initial_latent,
    make_simple_schedule,
)


def single_gaussian(mean=0.0, variance=1.0):
    return GaussianMixtureDenoiser([1.0], [mean], [variance])


class TestGaussianMixtureDenoiser:
    def test_standard_normal_at_unit_sigma(self, rng):
        model = single_gaussian()
        x = rng.standard_normal((2, 3))
        np.testing.assert_allclose(model.denoise(x, 1.0), x / 2.0, rtol=0, atol=0)

    def test_single_component_closed_form(self, rng):
        m, c, sigma = 0.7, 2.5, 0.8
        model = single_gaussian(m, c)
        x = rng.standard_normal(5)
        expected = (c * x + sigma**2 * m) / (c + sigma**2)
        np.testing.assert_allclose(model.denoise(x, sigma), expected, rtol=1e-14)

    def test_symmetric_components_cancel_at_origin(self):
        model = GaussianMixtureDenoiser([0.5, 0.5], [1.5, -1.5], [1.0, 1.0])
        x = np.zeros(4)
        np.testing.assert_allclose(model.denoise(x, 0.5), np.zeros(4), atol=1e-15)

    def test_affine_in_x_for_single_component(self, rng):
        model = single_gaussian(0.3, 1.7)
        x1 = rng.standard_normal(8)
        x2 = rng.standard_normal(8)
        alpha = 0.37
        lhs = model.denoise(alpha * x1 + (1 - alpha) * x2, 0.9)
        rhs = alpha * model.denoise(x1, 0.9) + (1 - alpha) * model.denoise(x2, 0.9)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_small_sigma_returns_x(self, rng):
        model = GaussianMixtureDenoiser([0.4, 0.6], [2.0, -1.0], [1.0, 0.5])
        x = rng.standard_normal(6)
        np.testing.assert_allclose(model.denoise(x, 1e-6), x, atol=1e-9)

    def test_far_x_stays_finite(self):
        # responsibilities underflow without log-sum-exp normalization
        model = GaussianMixtureDenoiser([0.5, 0.5], [100.0, -100.0], [1.0, 1.0])
        out = model.denoise(np.full(4, 1e4), 0.05)
        assert np.all(np.isfinite(out))

    def test_weights_normalized(self):
        model = GaussianMixtureDenoiser([2.0, 6.0], [0.0, 1.0], [1.0, 1.0])
        assert model.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            single_gaussian().denoise(np.zeros(3), 0.0)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            GaussianMixtureDenoiser([0.5, -0.5], [0.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            GaussianMixtureDenoiser([1.0], [0.0, 1.0], [1.0])


class TestExactSolution:
    def test_identity_when_sigma_unchanged(self, rng):
        model = single_gaussian(0.0, 1.0)
        x = rng.standard_normal(4)
        np.testing.assert_allclose(gm_exact_solution(model, x, 1.0, 1.0), x, rtol=0)

    def test_mean_is_fixed_point(self):
        model = single_gaussian(1.25, 2.0)
        x = np.full(3, 1.25)
        np.testing.assert_allclose(gm_exact_solution(model, x, 2.0, 0.1), x, atol=1e-14)

    def test_known_value(self):
        model = single_gaussian(0.0, 1.0)
        out = gm_exact_solution(model, np.array([2.0]), 1.0, 0.0)
        assert out[0] == pytest.approx(2.0 * math.sqrt(0.5), rel=1e-12)

    def test_multi_component_unsupported(self):
        model = GaussianMixtureDenoiser([0.5, 0.5], [0.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            gm_exact_solution(model, np.zeros(2), 1.0, 0.0)

    def test_euler_converges_first_order(self):
        # integrate dx/dsigma directly; the observed order should be about 1
        model = single_gaussian(0.0, 1.0)
        x0 = np.array([2.0, -1.0, 0.5])
        errs = []
        steps_list = [10, 20, 40, 80]
        for n_steps in steps_list:
            sched = make_simple_schedule(n_steps, 10.0, 0.1)
            x = x0.copy()
            for n in range(sched.steps):
                sc, sn = sched.sigmas[n], sched.sigmas[n + 1]
                denoised = model.denoise(x, sc)
                x = x + ((x - denoised) / sc) * (sn - sc)
            exact = gm_exact_solution(model, x0, 10.0, 0.1)
            errs.append(np.linalg.norm(x - exact))
        slope = -np.polyfit(np.log(steps_list), np.log(errs), 1)[0]
        assert 0.9 <= slope <= 1.1


class TestScriptedDenoiser:
    def test_returns_scripted_residuals_in_order(self):
        model = ScriptedDenoiser([1.0, -2.0])
        x = np.zeros(3)
        np.testing.assert_allclose(model.denoise(x, 1.0), np.full(3, 1.0))
        np.testing.assert_allclose(model.denoise(x, 0.5), np.full(3, -2.0))

    def test_exhaustion_raises(self):
        model = ScriptedDenoiser([0.5])
        model.denoise(np.zeros(2), 1.0)
        with pytest.raises(RuntimeError):
            model.denoise(np.zeros(2), 0.5)


class TestCountingDenoiser:
    def test_counts_every_call(self, rng):
        counting = CountingDenoiser(single_gaussian())
        x = rng.standard_normal(4)
        for _ in range(5):
            counting.denoise(x, 1.0)
        assert counting.call_count == 5


class TestInitialLatent:
    def test_seed_determinism_and_scale(self):
        a = initial_latent((2, 8), 3.0, seed=42)
        b = initial_latent((2, 8), 3.0, seed=42)
        np.testing.assert_array_equal(a, b)
        c = initial_latent((2, 8), 6.0, seed=42)
        np.testing.assert_allclose(c, 2.0 * a, rtol=1e-15)
