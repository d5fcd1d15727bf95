import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from hsdt_app.blocks import CONV3D
from hsdt_app.configfile import load_model_config, load_training_config, parse_config
from hsdt_app.exceptions import ConfigError
from hsdt_app.network import PRESETS, HsdtConfig
from restoration_app.noise import GAUSSIAN_BLIND


class ConfigFileMixin:

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text, name='run.cfg'):
        path = Path(self.tmp.name) / name
        path.write_text(text, encoding='utf-8')
        return str(path)


class ParseConfigTests(SimpleTestCase):

    def test_comments_and_blank_lines_are_skipped(self):
        values = parse_config("# model\n\nbase_channels = 8\n  variant=conv3d  \n")
        self.assertEqual(values, {'base_channels': '8', 'variant': 'conv3d'})

    def test_missing_equals_sign(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("base_channels 8\n")
        self.assertIn('line 1', ctx.exception.errors)

    def test_repeated_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("lr = 1\nlr = 2\n")
        self.assertIn('lr', ctx.exception.errors)


class ModelConfigTests(ConfigFileMixin, SimpleTestCase):

    def test_preset_names(self):
        self.assertIs(load_model_config('hsdt-m'), PRESETS['hsdt-m'])

    def test_file_overrides_preset(self):
        path = self.write("preset = hsdt-l\nvariant = conv3d\nlr = 0.01\n")
        config = load_model_config(path)
        self.assertEqual(config, PRESETS['hsdt-l'].replace(variant=CONV3D))

    def test_defaults_without_preset(self):
        self.assertEqual(load_model_config(self.write("d_train = 5\n")), HsdtConfig(d_train=5))

    def test_invalid_value_is_reported_per_key(self):
        with self.assertRaises(ConfigError) as ctx:
            load_model_config(self.write("base_channels = zero\ninput_channels = 3\n"))
        self.assertEqual(set(ctx.exception.errors), {'base_channels', 'input_channels'})


class TrainingConfigTests(ConfigFileMixin, SimpleTestCase):

    def test_preset_gets_staged_schedule(self):
        config, training = load_training_config('hsdt-s')
        self.assertEqual(config, PRESETS['hsdt-s'])
        self.assertEqual(training['schedule'].total_epochs, 110)
        self.assertIsNone(training['noise_spec'])
        self.assertEqual(training['patch'], [64, 64])
        self.assertEqual(training['batch'], 16)

    def test_constant_schedule_with_noise(self):
        path = self.write(
            "base_channels = 4\nschedule = constant\nepochs = 3\nlr = 0.002\n"
            "noise = gaussian_blind\nnoise_sigma_range = 10, 30\npatch = 16,16\n")
        config, training = load_training_config(path)
        self.assertEqual(config.base_channels, 4)
        self.assertEqual(training['schedule'].lr_at(2), 0.002)
        self.assertEqual(training['noise_spec'].kind, GAUSSIAN_BLIND)
        self.assertEqual(training['noise_spec'].sigma_range, (10.0, 30.0))
        self.assertEqual(training['patch'], [16, 16])

    def test_constant_schedule_needs_epochs_and_noise(self):
        with self.assertRaises(ConfigError) as ctx:
            load_training_config(self.write("schedule = constant\nnoise = gaussian\n"))
        self.assertIn('epochs', ctx.exception.errors)

    def test_scaled_staged_schedule(self):
        _, training = load_training_config(self.write("schedule_divisor = 10\n"))
        self.assertLess(training['schedule'].total_epochs, 20)

    def test_epochs_beyond_schedule(self):
        with self.assertRaises(ConfigError) as ctx:
            load_training_config(self.write("epochs = 500\n"))
        self.assertIn('epochs', ctx.exception.errors)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            load_training_config(self.write("learning_rate = 0.1\n"))
        self.assertEqual(ctx.exception.errors, {'learning_rate': ['Unknown key.']})
