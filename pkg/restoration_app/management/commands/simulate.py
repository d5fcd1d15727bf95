import logging

from hsdt_app.configfile import validate_config
from hsdt_app.exceptions import ConfigError
from hsdt_app.management.base import HsdtCommand, comma_ints, key_value

from restoration_app.api.serializers import DegradationLogSerializer, NoiseSpecSerializer
from restoration_app.containers import export_pgm, read_hsi, write_hsi
from restoration_app.noise import KIND_CHOICES, degrade
from restoration_app.synthetic import low_rank_hsi

logger = logging.getLogger(__name__)


class Command(HsdtCommand):
    help = ('Apply a noise spec to an HSI (or to a synthetic low-rank one) and write the noisy '
            'image plus its per-band degradation log.')

    def add_arguments(self, parser):
        parser.add_argument('--kind', required=True, choices=[kind for kind, _ in KIND_CHOICES])
        parser.add_argument('--seed', required=True, type=int)
        parser.add_argument('--input', help='clean HSI container; synthetic when omitted')
        parser.add_argument('--shape', type=comma_ints, default=(64, 64, 31),
                            help='H,W,D of the synthetic image (default 64,64,31)')
        parser.add_argument('--output', default='noisy.hsic')
        parser.add_argument('--clean-output', help='also write the synthetic clean image here')
        parser.add_argument('--log', help='degradation log JSON; stdout when omitted')
        parser.add_argument('--option', type=key_value, action='append', default=[], metavar='KEY=VALUE',
                            help='noise spec field, e.g. sigma=30 or column_range=0.05,0.15')
        parser.add_argument('--pgm-dir', help='also export every noisy band as 16-bit PGM')

    def run(self, kind, seed, input, shape, output, clean_output, log, option, pgm_dir, **options):
        data = dict(option)
        data.update(kind=kind, seed=seed)
        spec = validate_config(NoiseSpecSerializer, data).save()

        if input:
            clean = read_hsi(input)
        else:
            if len(shape) != 3:
                raise ConfigError('Invalid shape.', {'shape': ['Expected H,W,D.']})
            clean = low_rank_hsi(*shape, seed=seed)
            if clean_output:
                write_hsi(clean, clean_output)

        noisy, degradation = degrade(clean, spec)
        write_hsi(noisy, output)
        logger.info("Wrote %s (%s noise, seed %d).", output, kind, seed)
        if pgm_dir:
            export_pgm(noisy, pgm_dir, prefix='noisy')
        self.write_json(DegradationLogSerializer(degradation.as_dict()).data, log)
