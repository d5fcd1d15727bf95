import numpy as np
from django.test import SimpleTestCase, tag

from hsdt_app.exceptions import DivergenceError, ShapeError
from hsdt_app.network import HsdtConfig, build_model
from hsdt_app.training import constant_schedule, train_loop
from restoration_app.api.serializers import PnpProblemSerializer
from restoration_app.metrics import psnr
from restoration_app.noise import GAUSSIAN, NoiseSpec
from restoration_app.pnp import (AdmmProblem, Cassi, IdentityOperator, ModelDenoiser, SuperResolution, admm_restore,
                                 bicubic_upsample, conjugate_gradient, degrade_cassi, gaussian_kernel,
                                 identity_denoiser, random_mask)
from restoration_app.synthetic import dataset, low_rank_hsi


def inner(a, b):
    return float(np.sum(a * b))


class SuperResolutionTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.op = SuperResolution(2)

    def test_adjoint(self):
        x = self.rng.normal(size=(8, 12, 3))
        y = self.rng.normal(size=(4, 6, 3))
        self.assertAlmostEqual(inner(self.op.forward(x), y), inner(x, self.op.adjoint(y)), places=10)

    def test_kernel_is_normalized(self):
        kernel = gaussian_kernel()
        self.assertEqual(kernel.shape, (8, 8))
        self.assertAlmostEqual(kernel.sum(), 1.0)

    def test_blur_footprint(self):
        x = np.zeros((16, 16, 1))
        x[8, 8, 0] = 1.0
        blurred = SuperResolution(1).forward(x)
        self.assertEqual(np.count_nonzero(blurred), 64)
        self.assertAlmostEqual(blurred.sum(), 1.0)

    def test_constant_image_stays_constant(self):
        y = self.op.forward(np.full((8, 8, 2), 0.4))
        self.assertEqual(y.shape, (4, 4, 2))
        np.testing.assert_allclose(y, 0.4, atol=1e-12)

    def test_bicubic_initial_estimate(self):
        estimate = self.op.initial(np.full((4, 4, 2), 0.4))
        self.assertEqual(estimate.shape, (8, 8, 2))
        np.testing.assert_allclose(estimate, bicubic_upsample(np.full((4, 4, 2), 0.4), 2))
        np.testing.assert_allclose(estimate, 0.4, atol=1e-6)

    def test_indivisible_extent(self):
        with self.assertRaises(ShapeError):
            self.op.forward(np.zeros((7, 8, 1)))


class CassiTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.mask = random_mask((6, 5), seed=3)

    def test_measurement_shape(self):
        op = Cassi(self.mask, 4, step=2)
        self.assertEqual(op.measurement_shape, (6, 11))
        self.assertEqual(op.forward(self.rng.random((6, 5, 4))).shape, (6, 11))

    def test_adjoint(self):
        for step in (0, 1, 2):
            with self.subTest(step=step):
                op = Cassi(self.mask, 3, step)
                x = self.rng.normal(size=(6, 5, 3))
                y = self.rng.normal(size=op.measurement_shape)
                self.assertAlmostEqual(inner(op.forward(x), y), inner(x, op.adjoint(y)), places=10)

    def test_masked_shifted_sum(self):
        x = self.rng.random((6, 5, 2))
        y = degrade_cassi(x, self.mask, step=1)
        expected = np.zeros((6, 6))
        expected[:, 0:5] += self.mask * x[..., 0]
        expected[:, 1:6] += self.mask * x[..., 1]
        np.testing.assert_allclose(y, expected)

    def test_random_mask_is_binary_and_seeded(self):
        np.testing.assert_array_equal(random_mask((4, 4), 7), random_mask((4, 4), 7))
        self.assertTrue(set(np.unique(random_mask((16, 16), 7))) <= {0.0, 1.0})

    def test_invalid_masks(self):
        with self.assertRaises(ValueError):
            Cassi(np.full((2, 2), 0.5), 3)
        with self.assertRaises(ShapeError):
            Cassi(np.ones(4), 3)

    def test_shape_checks(self):
        op = Cassi(self.mask, 3)
        with self.assertRaises(ShapeError):
            op.forward(np.zeros((6, 5, 4)))
        with self.assertRaises(ShapeError):
            op.adjoint(np.zeros((6, 5)))


class ConjugateGradientTests(SimpleTestCase):

    def test_solves_spd_system(self):
        rng = np.random.default_rng(2)
        basis = rng.normal(size=(6, 6))
        matrix = basis @ basis.T + 6 * np.eye(6)
        b = rng.normal(size=6)
        x, history = conjugate_gradient(lambda v: matrix @ v, b, np.zeros(6), iterations=20, tolerance=1e-10)
        np.testing.assert_allclose(matrix @ x, b, atol=1e-8)
        self.assertLess(history[-1], history[0])

    def test_non_positive_curvature(self):
        with self.assertRaises(DivergenceError) as ctx:
            conjugate_gradient(lambda v: -v, np.ones(3), np.zeros(3), iterations=5)
        self.assertIn('residuals', ctx.exception.diagnostics)

    def test_exact_start_stops_immediately(self):
        x, history = conjugate_gradient(lambda v: 2 * v, np.ones(3), np.full(3, 0.5))
        np.testing.assert_array_equal(x, np.full(3, 0.5))
        self.assertEqual(history, [0.0])


class AdmmTests(SimpleTestCase):

    def setUp(self):
        self.clean = low_rank_hsi(16, 16, 4, seed=5)

    def test_schedule_defaults(self):
        problem = AdmmProblem.with_defaults(IdentityOperator(), self.clean, identity_denoiser, 10)
        self.assertEqual(problem.rhos, (1.0,) * 10)
        self.assertAlmostEqual(problem.sigmas[0], 50 / 255)
        self.assertAlmostEqual(problem.sigmas[-1], 5 / 255)
        self.assertTrue(all(b < a for a, b in zip(problem.sigmas, problem.sigmas[1:])))

    def test_schedule_validation(self):
        with self.assertRaises(ValueError):
            AdmmProblem(IdentityOperator(), self.clean, identity_denoiser, 2, rhos=(1.0, 0.0), sigmas=(0.1, 0.1))
        with self.assertRaises(ValueError):
            AdmmProblem(IdentityOperator(), self.clean, identity_denoiser, 2, rhos=(1.0,), sigmas=(0.1, 0.1))
        with self.assertRaises(ValueError):
            AdmmProblem(IdentityOperator(), self.clean, identity_denoiser, 0, rhos=(), sigmas=())

    def test_sr_never_loses_to_bicubic(self):
        op = SuperResolution(2)
        y = op.forward(self.clean)
        result = admm_restore(AdmmProblem.with_defaults(op, y, identity_denoiser, 10))
        self.assertGreaterEqual(psnr(self.clean, result.x) + 1e-6, psnr(self.clean, op.initial(y)))

    def test_fidelity_decreases(self):
        op = SuperResolution(2)
        y = op.forward(self.clean)
        result = admm_restore(AdmmProblem.with_defaults(op, y, identity_denoiser, 5))
        self.assertEqual(len(result.fidelity), 5)
        self.assertLess(result.fidelity[4], result.fidelity[0])
        self.assertEqual(len(result.cg_residuals), 5)

    def test_cassi_moves_towards_the_scene(self):
        op = Cassi(random_mask((16, 16), seed=1), 4)
        y = op.forward(self.clean)
        result = admm_restore(AdmmProblem.with_defaults(op, y, identity_denoiser, 10))
        self.assertLessEqual(np.linalg.norm(result.x - self.clean), np.linalg.norm(op.initial(y) - self.clean) + 1e-6)

    def test_fresh_noise_guided_model_as_prior(self):
        model = build_model(HsdtConfig(base_channels=2, input_channels=2, d_train=4), seed=0)
        op = SuperResolution(2)
        y = op.forward(self.clean)
        result = admm_restore(AdmmProblem.with_defaults(op, y, ModelDenoiser(model), 4))
        self.assertGreaterEqual(psnr(self.clean, result.x) + 0.01, psnr(self.clean, op.initial(y)))

    def test_identity_problem_recovers_the_observation(self):
        result = admm_restore(AdmmProblem.with_defaults(IdentityOperator(), self.clean, identity_denoiser, 1))
        np.testing.assert_allclose(result.x, self.clean, atol=1e-12)
        self.assertAlmostEqual(result.fidelity[0], 0.0, places=10)

    def test_penalty_weights_the_x_step(self):
        op = SuperResolution(2)
        y = op.forward(self.clean)
        flat = np.full_like(self.clean, 0.5)

        def fixed(x, sigma):
            return flat

        stiff = admm_restore(AdmmProblem.with_defaults(op, y, fixed, 1, rho=1e6))
        loose = admm_restore(AdmmProblem.with_defaults(op, y, fixed, 1, rho=1e-6))
        # the first x-step is pulled towards z, which starts at the bicubic estimate
        np.testing.assert_allclose(stiff.x, op.initial(y), atol=1e-5)
        self.assertLess(loose.fidelity[0], stiff.fidelity[0])

    def test_model_denoiser_returns_double_precision(self):
        denoiser = ModelDenoiser(build_model(HsdtConfig(base_channels=2, d_train=4), seed=0))
        out = denoiser(self.clean, 0.1)
        self.assertEqual(out.dtype, np.float64)
        np.testing.assert_allclose(out, self.clean, atol=1e-6)


@tag('slow')
class TrainedPriorTests(SimpleTestCase):

    def test_sr_with_a_trained_noise_guided_denoiser_beats_bicubic(self):
        config = HsdtConfig(base_channels=4, n_scales=2, d_train=4, input_channels=2)
        model = build_model(config, seed=0)
        train_loop(model, dataset(4, 32, 32, 4, seed=21), NoiseSpec(GAUSSIAN, sigma=30.0),
                   constant_schedule(1e-3, 5), batch=4, patch=(16, 16), seed=0, steps_per_epoch=10, progress=False)

        clean = low_rank_hsi(32, 32, 4, seed=77)
        op = SuperResolution(2)
        y = op.forward(clean)
        result = admm_restore(AdmmProblem.with_defaults(op, y, ModelDenoiser(model), 8))
        self.assertGreaterEqual(psnr(clean, result.x), psnr(clean, bicubic_upsample(y, 2)))


class PnpProblemSerializerTests(SimpleTestCase):

    def test_operator_specific_keys(self):
        serializer = PnpProblemSerializer(data={'operator': 'cassi', 'denoiser': 'identity', 'step': '2'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertNotIn('scale', serializer.validated_data)
        self.assertEqual(serializer.validated_data['step'], 2)
        self.assertEqual(serializer.validated_data['rho'], 1.0)

    def test_model_denoiser_needs_checkpoint(self):
        serializer = PnpProblemSerializer(data={'operator': 'sr'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('checkpoint', serializer.errors)

    def test_identity_with_identity_is_rejected(self):
        serializer = PnpProblemSerializer(data={'operator': 'identity', 'denoiser': 'identity'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('denoiser', serializer.errors)

    def test_rho_must_be_positive(self):
        serializer = PnpProblemSerializer(data={'operator': 'sr', 'denoiser': 'identity', 'rho': '0'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('rho', serializer.errors)
