import numpy as np
from django.test import SimpleTestCase

from hsdt_app.exceptions import NumericalError, ShapeError
from restoration_app.metrics import band_psnr, evaluate, psnr, sam, spectral_angles, ssim
from restoration_app.synthetic import low_rank_hsi


class PsnrTests(SimpleTestCase):

    def test_constant_offset(self):
        x = np.full((8, 8, 3), 0.5)
        self.assertAlmostEqual(psnr(x, x + 0.1), 20.0)

    def test_identical_images_hit_the_cap(self):
        x = np.random.default_rng(0).random((8, 8, 3))
        self.assertEqual(psnr(x, x), 100.0)
        self.assertEqual(psnr(x, x, cap=60.0), 60.0)

    def test_bands_are_averaged(self):
        ref = np.zeros((4, 4, 2))
        est = ref.copy()
        est[..., 0] = 0.1
        est[..., 1] = 0.01
        np.testing.assert_allclose(band_psnr(ref, est), [20.0, 40.0])
        self.assertAlmostEqual(psnr(ref, est), 30.0)

    def test_data_range(self):
        x = np.zeros((4, 4, 1))
        self.assertAlmostEqual(psnr(x, x + 25.5, data_range=255.0), 20.0)

    def test_more_noise_lowers_psnr(self):
        x = low_rank_hsi(16, 16, 4, seed=3)
        noise = np.random.default_rng(4).normal(size=x.shape)
        values = [psnr(x, x + sigma * noise) for sigma in (0.01, 0.05, 0.1)]
        self.assertGreater(values[0], values[1])
        self.assertGreater(values[1], values[2])

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            psnr(np.zeros((4, 4, 2)), np.zeros((4, 4, 3)))


class SsimTests(SimpleTestCase):

    def test_identical_images(self):
        x = low_rank_hsi(16, 16, 4, seed=0)
        self.assertEqual(ssim(x, x), 1.0)

    def test_symmetric(self):
        x = low_rank_hsi(16, 16, 4, seed=0)
        y = x + np.random.default_rng(1).normal(0.0, 0.05, x.shape)
        self.assertAlmostEqual(ssim(x, y), ssim(y, x), places=12)

    def test_anticorrelated_images_score_below_zero(self):
        x = np.random.default_rng(2).random((16, 16, 3))
        self.assertLess(ssim(x, 1.0 - x), 0.0)

    def test_constant_images(self):
        # zero variance leaves only the luminance term (2ab + C1) / (a^2 + b^2 + C1)
        a, b, c1 = 0.2, 0.6, 0.01 ** 2
        value = ssim(np.full((16, 16, 2), a), np.full((16, 16, 2), b))
        self.assertAlmostEqual(value, (2 * a * b + c1) / (a * a + b * b + c1), places=6)

    def test_noise_lowers_ssim(self):
        x = low_rank_hsi(16, 16, 4, seed=0)
        noisy = x + np.random.default_rng(1).normal(0.0, 0.1, x.shape)
        self.assertLess(ssim(x, noisy), 0.9)

    def test_image_smaller_than_window(self):
        with self.assertRaises(ShapeError):
            ssim(np.ones((8, 8, 2)), np.ones((8, 8, 2)))


class SamTests(SimpleTestCase):

    def test_orthogonal_spectra(self):
        ref = np.zeros((1, 1, 2))
        est = np.zeros((1, 1, 2))
        ref[..., 0] = 1.0
        est[..., 1] = 1.0
        self.assertAlmostEqual(sam(ref, est), np.pi / 2, delta=1e-9)

    def test_scaling_does_not_change_the_angle(self):
        x = np.random.default_rng(0).random((4, 4, 5)) + 0.1
        self.assertAlmostEqual(sam(x, 3.0 * x), 0.0, places=6)

    def test_zero_spectra_are_skipped(self):
        ref = np.ones((2, 1, 3))
        est = np.ones((2, 1, 3))
        est[0, 0] = 0.0
        angles, skipped = spectral_angles(ref, est)
        self.assertEqual(skipped, 1)
        self.assertEqual(angles.shape, (1,))

    def test_all_zero_is_undefined(self):
        with self.assertRaises(NumericalError):
            sam(np.zeros((2, 2, 3)), np.ones((2, 2, 3)))


class EvaluateTests(SimpleTestCase):

    def test_report(self):
        x = low_rank_hsi(16, 16, 4, seed=2)
        report = evaluate(x, x, name='copy')
        self.assertEqual(report.name, 'copy')
        self.assertEqual(report.psnr, 100.0)
        self.assertEqual(report.ssim, 1.0)
        self.assertAlmostEqual(report.sam, 0.0, places=6)
        self.assertEqual(report.skipped_pixels, 0)
        self.assertEqual(set(report.as_dict()), {'psnr', 'ssim', 'sam', 'skipped_pixels', 'name'})
