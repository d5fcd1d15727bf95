import logging

from rest_framework.exceptions import NotFound, ValidationError
from rest_framework.permissions import AllowAny
from rest_framework.response import Response
from rest_framework.views import APIView

from hsdt_app.conf import hsdt_settings
from hsdt_app.configfile import load_model_config
from hsdt_app.exceptions import HsdtError
from hsdt_app.modules import count_params, parameter_table
from hsdt_app.network import PRESETS, build_model, constant_noise_map, pad_to_multiple
from hsdt_app.weights import load_weights

from restoration_app.containers import read_hsi

from .serializers import AttentionMapSerializer, AttentionRequestSerializer, ParamsSerializer

logger = logging.getLogger(__name__)


def params_report(config, model):
    """Parameter report payload shared by the API and the `params` command."""
    return ParamsSerializer({
        'config': config.as_dict(),
        'total': count_params(model),
        'layers': parameter_table(model),
    }).data


def serving_model(seed):
    """
    The model behind the API: the configured checkpoint, or a fresh one.
    """
    config = load_model_config(hsdt_settings.CHECKPOINT_CONFIG)
    if hsdt_settings.CHECKPOINT:
        return load_weights(hsdt_settings.CHECKPOINT, config)
    logger.warning("No HSDT checkpoint configured; serving a freshly initialized model (seed %d).", seed)
    return build_model(config, seed)


class ParamsView(APIView):
    """
    Parameter count of a preset and its per-tensor table.

    GET: Returns config, total and layers.
    """
    permission_classes = [AllowAny]

    def get(self, request, preset):
        if preset not in PRESETS:
            raise NotFound(f"Unknown preset '{preset}'.")
        config = PRESETS[preset]
        return Response(params_report(config, build_model(config, seed=0)))


class AttentionMapView(APIView):
    """
    D x D attention map of every block for an uploaded HSI container.

    POST: multipart `hsi` file, optional `mode` ('sa' or 'ca') and `seed`.
    """
    permission_classes = [AllowAny]

    def post(self, request):
        serializer = AttentionRequestSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        try:
            hsi = read_hsi(data['hsi'])
            model = serving_model(data['seed'])
            model.eval()
            padded, _ = pad_to_multiple(hsi, model.config.downsampling)
            maps = model.attention_maps(padded.astype(model.dtype), data['mode'],
                                        noise_map=constant_noise_map(model, padded, 0.0))
        except HsdtError as exc:
            raise ValidationError({'detail': str(exc)})
        payload = [{'block': name, 'attention': attention.tolist()} for name, attention in maps]
        return Response(AttentionMapSerializer(payload, many=True).data)
