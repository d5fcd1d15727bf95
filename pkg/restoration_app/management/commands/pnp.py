import logging
from pathlib import Path

import numpy as np

from hsdt_app.configfile import load_model_config, parse_config, validate_config
from hsdt_app.exceptions import ConfigError, ShapeError
from hsdt_app.management.base import HsdtCommand
from hsdt_app.weights import load_weights

from restoration_app.api.serializers import (IDENTITY_DENOISER, AdmmDiagnosticsSerializer,
                                             PnpProblemSerializer)
from restoration_app.containers import read_hsi, write_hsi
from restoration_app.metrics import evaluate
from restoration_app.pnp import (CASSI, SR, AdmmProblem, Cassi, IdentityOperator, ModelDenoiser, SuperResolution,
                                 admm_restore, identity_denoiser, random_mask)

logger = logging.getLogger(__name__)


class Command(HsdtCommand):
    help = ('Plug-and-play ADMM restoration with a denoiser prior. The problem file (key=value) names '
            'the operator (sr, cassi or identity), its parameters, the schedule and the denoiser.')

    def add_arguments(self, parser):
        parser.add_argument('--problem', required=True, help='key=value problem description')
        parser.add_argument('--seed', required=True, type=int, help='draws the CASSI mask when none is given')
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--observation', help='HSI container with y (CASSI: one band of H x W\')')
        source.add_argument('--clean', help='clean HSI container; degraded here and used as reference')
        parser.add_argument('--output', default='restored.hsic')
        parser.add_argument('--observation-output', help='write the simulated observation (with --clean)')
        parser.add_argument('--diagnostics', help='diagnostics JSON; stdout when omitted')

    def build_operator(self, problem, observation, clean, seed):
        kind = problem['operator']
        if kind == SR:
            return SuperResolution(problem['scale'])
        if kind != CASSI:
            return IdentityOperator()

        bands = clean.shape[-1] if clean is not None else problem.get('bands')
        if bands is None:
            raise ConfigError('Invalid problem.', {'bands': ['CASSI needs the band count of the scene.']})
        if clean is not None:
            height, width = clean.shape[:2]
        else:
            height, width = observation.shape[0], observation.shape[1] - (bands - 1) * problem['step']
            if width < 1:
                raise ShapeError(f"observation {observation.shape} is too narrow for {bands} bands")
        if 'mask' in problem:
            mask = read_hsi(problem['mask'])[..., 0]
        else:
            mask = random_mask((height, width), seed)
        return Cassi(mask, bands, problem['step'])

    def build_denoiser(self, problem):
        if problem['denoiser'] == IDENTITY_DENOISER:
            return identity_denoiser
        model = load_weights(problem['checkpoint'], load_model_config(problem['config']))
        return ModelDenoiser(model)

    def run(self, problem, seed, observation, clean, output, observation_output, diagnostics, **options):
        values = parse_config(Path(problem).read_text(encoding='utf-8'))
        problem = validate_config(PnpProblemSerializer, values).validated_data

        y = None
        if clean is not None:
            clean = read_hsi(clean).astype(np.float64)
        else:
            y = read_hsi(observation).astype(np.float64)
            if problem['operator'] == CASSI:
                y = y[..., 0]
        operator = self.build_operator(problem, y, clean, seed)
        if clean is not None:
            y = operator.forward(clean)
            if observation_output:
                write_hsi(y[..., None] if y.ndim == 2 else y, observation_output)

        admm = AdmmProblem.with_defaults(operator, y, self.build_denoiser(problem), problem['iterations'],
                                         rho=problem['rho'], sigma_start=problem['sigma_start'],
                                         sigma_end=problem['sigma_end'])
        result = admm_restore(admm, problem.get('cg_iterations'), problem.get('cg_tolerance'))
        write_hsi(result.x, output)

        report = {
            'operator': operator.kind,
            'iterations': admm.iterations,
            'rhos': list(admm.rhos),
            'sigmas': list(admm.sigmas),
            'fidelity': result.fidelity,
            'cg_residuals': result.cg_residuals,
        }
        if clean is not None:
            report['initial'] = evaluate(clean, operator.initial(y), name='initial')
            report['restored'] = evaluate(clean, result.x, name='restored')
            logger.info("PSNR %.2f dB (initial %.2f dB).", report['restored'].psnr, report['initial'].psnr)
        self.write_json(AdmmDiagnosticsSerializer(report).data, diagnostics)
