import logging
from pathlib import Path

from hsdt_app.api.serializers import LossCurveSerializer
from hsdt_app.configfile import load_training_config
from hsdt_app.exceptions import ConfigError
from hsdt_app.management.base import HsdtCommand, comma_ints
from hsdt_app.network import build_model
from hsdt_app.training import train_loop
from hsdt_app.weights import load_checkpoint, save_checkpoint

from restoration_app.containers import read_hsi
from restoration_app.synthetic import dataset as synthetic_dataset

logger = logging.getLogger(__name__)


class Command(HsdtCommand):
    help = ('Train an HSDT from a key=value config (or preset) on a directory of HSI containers, '
            'or on synthetic low-rank images. Writes a checkpoint and the loss curve.')

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='preset name or key=value config file')
        parser.add_argument('--seed', required=True, type=int)
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--data', help='directory of *.hsic clean images')
        source.add_argument('--synthetic', type=int, metavar='COUNT', help='train on COUNT synthetic images')
        parser.add_argument('--synthetic-shape', type=comma_ints, default=(64, 64, 31), help='H,W,D')
        parser.add_argument('--output', default='checkpoint.hsdt')
        parser.add_argument('--curve', help='loss curve JSON; stdout when omitted')
        parser.add_argument('--resume', help='checkpoint to continue from')

    def load_dataset(self, data, synthetic, synthetic_shape, seed):
        if synthetic is not None:
            if len(synthetic_shape) != 3:
                raise ConfigError('Invalid shape.', {'synthetic_shape': ['Expected H,W,D.']})
            return synthetic_dataset(synthetic, *synthetic_shape, seed=seed)
        paths = sorted(Path(data).glob('*.hsic'))
        if not paths:
            raise ConfigError('Empty dataset.', {'data': [f"No .hsic files in {data}."]})
        return [read_hsi(path) for path in paths]

    def run(self, config, seed, data, synthetic, synthetic_shape, output, curve, resume, **options):
        model_config, training = load_training_config(config)
        images = self.load_dataset(data, synthetic, synthetic_shape, seed)
        logger.info("Training %s on %d images.", model_config, len(images))

        state = None
        if resume:
            model, state = load_checkpoint(resume, model_config, dtype=training['dtype'])
        else:
            model = build_model(model_config, seed, dtype=training['dtype'])

        result = train_loop(
            model, images, training['noise_spec'], training['schedule'],
            epochs=training.get('epochs'),
            batch=training['batch'],
            patch=tuple(training['patch']),
            seed=seed,
            steps_per_epoch=training.get('steps_per_epoch'),
            loss_kind=training['loss'],
            clip_norm=training.get('clip_norm'),
            ca_probability=training['ca_probability'],
            state=state,
            start_epoch=None if resume else 0,
        )
        save_checkpoint(result.model, result.state, output)
        self.write_json(LossCurveSerializer(result).data, curve)
