import argparse
import logging

from hsdt_app.blocks import ATTENTION_CHOICES, SELF_ATTENTION
from hsdt_app.configfile import load_model_config
from hsdt_app.management.base import HsdtCommand
from hsdt_app.network import constant_noise_map, denoise
from hsdt_app.weights import load_weights

from restoration_app.containers import export_pgm, read_hsi, write_hsi

logger = logging.getLogger(__name__)


class Command(HsdtCommand):
    help = ('Restore a noisy HSI with a trained checkpoint. Inputs of any spatial size are '
            'reflect-padded for the network and cropped back.')

    def add_arguments(self, parser):
        parser.add_argument('input', help='noisy HSI container')
        parser.add_argument('output', help='restored HSI container')
        parser.add_argument('--checkpoint', required=True, help='weight or checkpoint file')
        parser.add_argument('--config', default='hsdt-s', help='preset name or key=value config file')
        parser.add_argument('--mode', choices=[mode for mode, _ in ATTENTION_CHOICES], default=SELF_ATTENTION)
        parser.add_argument('--fast', action=argparse.BooleanOptionalAction, default=True,
                            help='grouped-convolution attention path (--no-fast for the matmul path)')
        parser.add_argument('--noise-sigma', type=float, default=0.0,
                            help='noise level (0-255) fed to two-channel models')
        parser.add_argument('--pgm-dir', help='also export every restored band as 16-bit PGM')

    def run(self, input, output, checkpoint, config, mode, fast, noise_sigma, pgm_dir, **options):
        model = load_weights(checkpoint, load_model_config(config))
        noisy = read_hsi(input)
        restored = denoise(model, noisy, noise_map=constant_noise_map(model, noisy, noise_sigma / 255.0),
                           attn_mode=mode, fast=fast)
        write_hsi(restored, output)
        logger.info("Restored %s -> %s (%dx%dx%d).", input, output, *restored.shape)
        if pgm_dir:
            export_pgm(restored, pgm_dir, prefix='restored')
