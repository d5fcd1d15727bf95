import numpy as np
from django.test import SimpleTestCase, tag

from hsdt_app import functional as F
from hsdt_app.autograd import Tensor
from hsdt_app.gradcheck import SUITE, check_gradients, relative_error, run_suite
from hsdt_app.modules import BatchNorm


class RelativeErrorTests(SimpleTestCase):

    def test_identical_arrays(self):
        self.assertEqual(relative_error([1.0, -2.0], [1.0, -2.0]), 0.0)

    def test_scaled_by_largest_entry(self):
        self.assertAlmostEqual(relative_error([1.0, 4.0], [1.0, 3.0]), 0.25)

    def test_all_zero(self):
        self.assertEqual(relative_error(np.zeros(3), np.zeros(3)), 0.0)

    def test_rounding_noise_around_zero_is_floored(self):
        self.assertLess(relative_error([6.7e-16], [2.2e-12]), 1e-4)
        self.assertAlmostEqual(relative_error([0.0], [2e-6], floor=1e-6), 2.0)

    def test_floor_does_not_mask_large_gradients(self):
        self.assertAlmostEqual(relative_error([10.0], [9.0], floor=1.0), 0.1)


class CheckGradientsTests(SimpleTestCase):

    def test_detects_a_wrong_gradient(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        # the closure's value ignores the tape, so the analytic gradient is zero
        result = check_gradients('detached', lambda: Tensor((x.data ** 2).sum()) + (x * 0.0).sum(), [x])
        self.assertFalse(result.passed)

    def test_max_entries_limits_the_check(self):
        x = Tensor(np.random.default_rng(0).normal(size=(5, 5)), requires_grad=True)
        result = check_gradients('square', lambda: (x * x).sum(), [x], max_entries=6)
        self.assertTrue(result.passed)
        self.assertEqual(result.checked, 6)

    def test_bias_feeding_train_mode_batch_norm(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(4, 4, 3, 2)), requires_grad=True, dtype='float64')
        kernel = Tensor(rng.normal(size=(3, 3, 3, 2, 3)), requires_grad=True, dtype='float64')
        bias = Tensor(rng.normal(size=3), requires_grad=True, dtype='float64')
        state = BatchNorm(3, dtype='float64')
        weights = rng.normal(size=(4, 4, 3, 3))

        def f():
            return (F.batch_norm(F.conv3d(x, kernel, bias, padding=(1, 1, 1)), state, mode='train') * weights).sum()

        result = check_gradients('conv_bias_bn', f, [x, kernel, bias])
        self.assertTrue(result.passed, result.max_relative_error)
        self.assertLess(np.abs(bias.grad).max(), 1e-10)


class SuiteTests(SimpleTestCase):

    def test_elementary_operations(self):
        names = ['conv3d', 'conv3d_grouped', 'matmul', 'einsum', 'softmax', 'sigmoid', 'gelu',
                 'global_avg_pool', 'trilinear_upsample', 'batch_norm_train', 'batch_norm_eval', 'tensor_ops']
        for result in run_suite(names, seed=0, progress=False):
            with self.subTest(name=result.name):
                self.assertTrue(result.passed, result.max_relative_error)

    def test_attention(self):
        names = ['gssa_sa', 'gssa_ca', 'gssa_fast_sa', 'gssa_fast_ca', 'band_mixing', 'smffn']
        for result in run_suite(names, seed=1, progress=False):
            with self.subTest(name=result.name):
                self.assertTrue(result.passed, result.max_relative_error)

    def test_transformer_block(self):
        result, = run_suite(['transformer_block'], seed=0, progress=False)
        self.assertTrue(result.passed, result.max_relative_error)

    def test_subset_results_match_the_full_suite_order(self):
        results = run_suite(['softmax', 'matmul'], seed=0, progress=False)
        self.assertEqual([r.name for r in results], ['matmul', 'softmax'])

    def test_unknown_name(self):
        with self.assertRaises(ValueError):
            run_suite(['conv4d'], progress=False)


@tag('slow')
class FullSuiteTests(SimpleTestCase):

    def test_every_case_passes(self):
        results = run_suite(seed=0, progress=False)
        self.assertEqual(len(results), len(SUITE))
        for result in results:
            with self.subTest(name=result.name):
                self.assertTrue(result.passed, result.max_relative_error)
