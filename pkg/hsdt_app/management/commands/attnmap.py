from hsdt_app.api.serializers import AttentionMapSerializer
from hsdt_app.blocks import ATTENTION_CHOICES, SELF_ATTENTION
from hsdt_app.configfile import load_model_config
from hsdt_app.management.base import HsdtCommand
from hsdt_app.network import build_model, constant_noise_map, pad_to_multiple
from hsdt_app.weights import load_weights

from restoration_app.containers import read_hsi


class Command(HsdtCommand):
    help = 'Dump the D x D band attention map of every block for one HSI.'

    def add_arguments(self, parser):
        parser.add_argument('input', help='HSI container')
        parser.add_argument('--seed', required=True, type=int, help='initialization seed without --checkpoint')
        parser.add_argument('--checkpoint', help='weight or checkpoint file')
        parser.add_argument('--config', default='hsdt-s', help='preset name or key=value config file')
        parser.add_argument('--mode', choices=[mode for mode, _ in ATTENTION_CHOICES], default=SELF_ATTENTION)
        parser.add_argument('--noise-sigma', type=float, default=0.0,
                            help='noise level (0-255) fed to two-channel models')
        parser.add_argument('--output', help='attention maps JSON; stdout when omitted')

    def run(self, input, seed, checkpoint, config, mode, noise_sigma, output, **options):
        config = load_model_config(config)
        model = load_weights(checkpoint, config) if checkpoint else build_model(config, seed)
        model.eval()
        padded, _ = pad_to_multiple(read_hsi(input), config.downsampling)
        noise_map = constant_noise_map(model, padded, noise_sigma / 255.0)
        maps = model.attention_maps(padded.astype(model.dtype), mode, noise_map=noise_map)
        payload = [{'block': name, 'attention': attention.tolist()} for name, attention in maps]
        self.write_json(AttentionMapSerializer(payload, many=True).data, output)
