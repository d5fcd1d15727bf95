import numpy as np
from django.test import SimpleTestCase

from hsdt_app.blocks import CROSS_ATTENTION, SELF_ATTENTION, TransformerBlock
from hsdt_app.exceptions import BandCountError, ConfigError, PaddingRequiredError, ShapeError
from hsdt_app.modules import count_params
from hsdt_app.network import (ALTERNATE, HsdtConfig, build_model, constant_noise_map, conv3d_baseline, denoise,
                              get_preset, pad_to_multiple)

SMALL = HsdtConfig(base_channels=4, d_train=4)


class PresetTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.counts = {name: count_params(build_model(get_preset(name), seed=0))
                      for name in ('hsdt-s', 'hsdt-m', 'hsdt-l')}

    def test_small_model_size(self):
        self.assertEqual(self.counts['hsdt-s'], 126541)

    def test_doubling_width_nearly_quadruples_parameters(self):
        ratio = self.counts['hsdt-m'] / self.counts['hsdt-s']
        self.assertGreaterEqual(ratio, 3.6)
        self.assertLessEqual(ratio, 4.0)

    def test_large_adds_one_inner_block(self):
        block = TransformerBlock(60, 60, np.random.default_rng(0))
        self.assertEqual(self.counts['hsdt-l'] - self.counts['hsdt-m'], count_params(block))

    def test_conv3d_baseline_is_larger(self):
        dense = count_params(build_model(conv3d_baseline(get_preset('hsdt-m')), seed=0))
        ratio = dense / self.counts['hsdt-m']
        self.assertGreaterEqual(ratio, 1.05)
        self.assertLessEqual(ratio, 1.25)

    def test_unknown_preset(self):
        with self.assertRaises(ConfigError):
            get_preset('hsdt-xl')


class ConfigTests(SimpleTestCase):

    def test_invalid_fields_are_collected(self):
        with self.assertRaises(ConfigError) as ctx:
            HsdtConfig(base_channels=0, input_channels=3)
        self.assertEqual(set(ctx.exception.errors), {'base_channels', 'input_channels'})

    def test_downsampling_factor(self):
        self.assertEqual(HsdtConfig(n_scales=3).downsampling, 4)
        self.assertEqual(HsdtConfig(n_scales=1).downsampling, 1)


class BuildTests(SimpleTestCase):

    def test_same_seed_gives_identical_parameters(self):
        first, second = build_model(SMALL, seed=7), build_model(SMALL, seed=7)
        for (name, a), (_, b) in zip(first.named_parameters(), second.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=name)

    def test_different_seeds_differ(self):
        first, second = build_model(SMALL, seed=1), build_model(SMALL, seed=2)
        self.assertFalse(np.array_equal(first.head[0].gssa.queries.data, second.head[0].gssa.queries.data))

    def test_parameter_names_follow_stage_paths(self):
        names = [name for name, _ in build_model(SMALL, seed=0).named_parameters()]
        self.assertIn('head.0.s3conv.spatial.0.weight', names)
        self.assertIn('encoder.1.gssa.queries', names)
        self.assertIn('decoder.0.smffn.w3.bias', names)
        self.assertEqual(names[-2:], ['tail.weight', 'tail.bias'])


class ForwardTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.model = build_model(SMALL, seed=0, dtype='float64')

    def test_one_model_handles_any_band_count(self):
        for bands in (5, 31, 210):
            with self.subTest(bands=bands):
                hsi = self.rng.random((8, 8, bands))
                self.assertEqual(self.model(hsi).shape, (8, 8, bands))

    def test_fresh_model_is_the_identity(self):
        hsi = self.rng.random((8, 12, 6))
        np.testing.assert_array_equal(self.model(hsi).data, hsi)

    def test_batched_input(self):
        hsi = self.rng.random((2, 8, 8, 3))
        self.assertEqual(self.model(hsi).shape, (2, 8, 8, 3))

    def test_indivisible_extent_requires_padding(self):
        with self.assertRaises(PaddingRequiredError):
            self.model(self.rng.random((6, 8, 4)))

    def test_cross_attention_needs_d_train_bands(self):
        self.model.eval()
        self.assertEqual(self.model(self.rng.random((8, 8, 4)), attn_mode=CROSS_ATTENTION).shape, (8, 8, 4))
        with self.assertRaises(BandCountError):
            self.model(self.rng.random((8, 8, 5)), attn_mode=CROSS_ATTENTION)

    def test_noise_map_channel_contract(self):
        hsi = self.rng.random((8, 8, 4))
        with self.assertRaises(ShapeError):
            self.model(hsi, noise_map=np.zeros_like(hsi))
        guided = build_model(SMALL.replace(input_channels=2), seed=0, dtype='float64')
        with self.assertRaises(ShapeError):
            guided(hsi)
        np.testing.assert_array_equal(guided(hsi, noise_map=np.full_like(hsi, 0.1)).data, hsi)

    def test_eval_mode_is_deterministic(self):
        self.model.eval()
        hsi = self.rng.random((8, 8, 4))
        np.testing.assert_array_equal(self.model(hsi).data, self.model(hsi).data)

    def test_fast_path_matches(self):
        model = build_model(SMALL, seed=3, dtype='float64').eval()
        for block in model.head:
            block.gssa.post.weight.data[...] *= 3
        model.tail.weight.data[...] = 0.1
        hsi = self.rng.random((8, 8, 5))
        np.testing.assert_allclose(model(hsi, fast=True).data, model(hsi).data, atol=1e-10)


class AttentionModeTests(SimpleTestCase):

    def setUp(self):
        self.model = build_model(SMALL, seed=0)

    def test_alternate_falls_back_to_self_attention(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            self.assertEqual(self.model.resolve_attention(ALTERNATE, 5, rng, ca_probability=1.0), SELF_ATTENTION)

    def test_alternate_follows_probability(self):
        rng = np.random.default_rng(0)
        self.assertEqual(self.model.resolve_attention(ALTERNATE, 4, rng, ca_probability=1.0), CROSS_ATTENTION)
        self.assertEqual(self.model.resolve_attention(ALTERNATE, 4, rng, ca_probability=0.0), SELF_ATTENTION)

    def test_alternate_needs_a_generator(self):
        with self.assertRaises(ValueError):
            self.model.resolve_attention(ALTERNATE, 4)

    def test_unknown_mode(self):
        with self.assertRaises(ValueError):
            self.model.resolve_attention('mixed', 4)

    def test_attention_maps_cover_every_block(self):
        maps = self.model.attention_maps(np.random.default_rng(1).random((8, 8, 6)))
        self.assertEqual([name for name, _ in maps],
                         ['head.0', 'encoder.0', 'encoder.1', 'decoder.0', 'decoder.1'])
        for _, attention in maps:
            self.assertEqual(attention.shape, (6, 6))
            np.testing.assert_allclose(attention.sum(axis=-1), np.ones(6), atol=1e-5)

    def test_attention_maps_leave_running_statistics_alone(self):
        model = build_model(SMALL, seed=0)
        before = {name: buf.copy() for name, buf in model.named_buffers()}
        model.attention_maps(np.random.default_rng(1).random((8, 8, 6)))
        self.assertTrue(model.training)
        for name, buf in model.named_buffers():
            with self.subTest(name=name):
                np.testing.assert_array_equal(buf, before[name])

    def test_attention_maps_keep_eval_mode(self):
        model = build_model(SMALL, seed=0)
        model.eval()
        model.attention_maps(np.random.default_rng(1).random((8, 8, 4)))
        self.assertFalse(model.training)


class DenoiseTests(SimpleTestCase):

    def test_pad_to_multiple(self):
        padded, extents = pad_to_multiple(np.zeros((10, 9, 3)), 4)
        self.assertEqual(padded.shape, (12, 12, 3))
        self.assertEqual(extents, (10, 9))

    def test_already_divisible_is_untouched(self):
        hsi = np.ones((8, 4, 2))
        padded, _ = pad_to_multiple(hsi, 4)
        self.assertIs(padded, hsi)

    def test_denoise_pads_and_crops(self):
        model = build_model(SMALL, seed=0)
        hsi = np.random.default_rng(2).random((10, 9, 4))
        out = denoise(model, hsi)
        self.assertFalse(model.training)
        self.assertEqual(out.shape, (10, 9, 4))
        np.testing.assert_array_equal(out, hsi.astype(np.float32))

    def test_denoise_defaults_to_the_fast_path(self):
        model = build_model(SMALL, seed=3, dtype='float64')
        model.tail.weight.data[...] = 0.1
        hsi = np.random.default_rng(4).random((10, 9, 4))
        fast = denoise(model, hsi)
        self.assertFalse(np.allclose(fast, hsi))
        np.testing.assert_allclose(fast, denoise(model, hsi, fast=False), atol=1e-10)

    def test_constant_noise_map(self):
        hsi = np.zeros((4, 4, 2))
        self.assertIsNone(constant_noise_map(build_model(SMALL, seed=0), hsi, 0.1))
        guided = build_model(SMALL.replace(input_channels=2), seed=0)
        np.testing.assert_array_equal(constant_noise_map(guided, hsi, 0.1), np.full((4, 4, 2), 0.1, np.float32))
