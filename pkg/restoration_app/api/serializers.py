from rest_framework import serializers

from hsdt_app.api.serializers import CommaListField
from hsdt_app.exceptions import NoiseSpecError

from restoration_app.noise import KIND_CHOICES, NoiseSpec
from restoration_app.pnp import CASSI, IDENTITY, OPERATOR_CHOICES, SR

IDENTITY_DENOISER = 'identity'
MODEL_DENOISER = 'model'

DENOISER_CHOICES = [
    (IDENTITY_DENOISER, 'pass-through prior'),
    (MODEL_DENOISER, 'HSDT checkpoint'),
]


class NoiseSpecSerializer(serializers.Serializer):
    """
    Validates `simulate` options and builds a NoiseSpec.
    """
    kind = serializers.ChoiceField(choices=KIND_CHOICES)
    seed = serializers.IntegerField(min_value=0)
    sigma = serializers.FloatField(min_value=0.0, required=False)
    sigma_range = CommaListField(child=serializers.FloatField(min_value=0.0), min_length=2, max_length=2,
                                 required=False)
    sigmas = CommaListField(child=serializers.FloatField(min_value=0.0), min_length=1, required=False)
    band_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    column_range = CommaListField(child=serializers.FloatField(min_value=0.0, max_value=1.0),
                                  min_length=2, max_length=2, required=False)
    stripe_amplitude = serializers.FloatField(min_value=0.0, required=False)
    impulse_range = CommaListField(child=serializers.FloatField(min_value=0.0, max_value=1.0),
                                   min_length=2, max_length=2, required=False)
    salt_ratio = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)

    def validate(self, attrs):
        try:
            NoiseSpec(**self._spec_kwargs(attrs))
        except NoiseSpecError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    @staticmethod
    def _spec_kwargs(attrs):
        return {key: tuple(value) if isinstance(value, list) else value for key, value in attrs.items()}

    def create(self, validated_data):
        return NoiseSpec(**self._spec_kwargs(validated_data))


class DegradationLogSerializer(serializers.Serializer):
    kind = serializers.CharField()
    seed = serializers.IntegerField()
    shape = serializers.ListField(child=serializers.IntegerField())
    bands = serializers.ListField(child=serializers.ListField(child=serializers.DictField()))


class MetricReportSerializer(serializers.Serializer):
    name = serializers.CharField(allow_blank=True)
    psnr = serializers.FloatField()
    ssim = serializers.FloatField()
    sam = serializers.FloatField()
    skipped_pixels = serializers.IntegerField()


class MetricsRequestSerializer(serializers.Serializer):
    ref = serializers.FileField()
    est = serializers.FileField()
    data_range = serializers.FloatField(min_value=0.0, default=1.0)


class PnpProblemSerializer(serializers.Serializer):
    """
    Validates a PnP problem description (key=value file).

    `mask` names an HSI container holding the binary mask as its single
    band; without it CASSI draws a random mask from the command seed.
    `bands` is needed for CASSI unless the clean scene is given.
    """
    operator = serializers.ChoiceField(choices=OPERATOR_CHOICES)
    scale = serializers.IntegerField(min_value=1, default=2)
    step = serializers.IntegerField(min_value=0, default=1)
    bands = serializers.IntegerField(min_value=1, required=False)
    mask = serializers.CharField(required=False)
    iterations = serializers.IntegerField(min_value=1, default=10)
    rho = serializers.FloatField(min_value=0.0, default=1.0)
    sigma_start = serializers.FloatField(min_value=0.0, default=50 / 255)
    sigma_end = serializers.FloatField(min_value=0.0, default=5 / 255)
    cg_iterations = serializers.IntegerField(min_value=1, required=False)
    cg_tolerance = serializers.FloatField(min_value=0.0, required=False)
    denoiser = serializers.ChoiceField(choices=DENOISER_CHOICES, default=MODEL_DENOISER)
    checkpoint = serializers.CharField(required=False)
    config = serializers.CharField(default='hsdt-s')

    def validate_rho(self, value):
        if value <= 0:
            raise serializers.ValidationError('Must be positive.')
        return value

    def validate(self, attrs):
        operator = attrs['operator']
        if operator != SR:
            attrs.pop('scale')
        if operator != CASSI:
            attrs.pop('step')
        if attrs['denoiser'] == MODEL_DENOISER and 'checkpoint' not in attrs:
            raise serializers.ValidationError({'checkpoint': 'The model denoiser needs a checkpoint.'})
        if operator == IDENTITY and attrs['denoiser'] == IDENTITY_DENOISER:
            raise serializers.ValidationError({'denoiser': 'Identity operator and denoiser restore nothing.'})
        return attrs


class AdmmDiagnosticsSerializer(serializers.Serializer):
    operator = serializers.CharField()
    iterations = serializers.IntegerField()
    rhos = serializers.ListField(child=serializers.FloatField())
    sigmas = serializers.ListField(child=serializers.FloatField())
    fidelity = serializers.ListField(child=serializers.FloatField())
    cg_residuals = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    initial = MetricReportSerializer(required=False)
    restored = MetricReportSerializer(required=False)
