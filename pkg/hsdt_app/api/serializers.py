from rest_framework import serializers
from rest_framework.renderers import JSONRenderer

from hsdt_app.blocks import ATTENTION_CHOICES, VARIANT_CHOICES
from hsdt_app.exceptions import NoiseSpecError
from hsdt_app.network import PRESETS, HsdtConfig
from hsdt_app.training import LOSS_CHOICES, MSE, STAGED_SCHEDULE, constant_schedule

from restoration_app.noise import KIND_CHOICES, NoiseSpec

STAGED = 'staged'
CONSTANT = 'constant'

SCHEDULE_CHOICES = [
    (STAGED, 'three-stage multi-step table'),
    (CONSTANT, 'a single constant learning rate'),
]

DTYPE_CHOICES = ['float32', 'float64']


def render_json(data):
    """Indented UTF-8 JSON, as the API would return it."""
    return JSONRenderer().render(data, renderer_context={'indent': 2})


class CommaListField(serializers.ListField):
    """
    ListField that also accepts a comma-separated string, as found in key=value files.
    """

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(',') if item.strip()]
        return super().to_internal_value(data)


class HsdtConfigSerializer(serializers.Serializer):
    """
    Validates model keys of a config file and builds an HsdtConfig.

    `preset` selects the starting point; the remaining keys override it.
    """
    preset = serializers.ChoiceField(choices=sorted(PRESETS), required=False)
    base_channels = serializers.IntegerField(min_value=1, required=False)
    n_scales = serializers.IntegerField(min_value=1, required=False)
    extra_inner_blocks = serializers.IntegerField(min_value=0, required=False)
    d_train = serializers.IntegerField(min_value=1, required=False)
    input_channels = serializers.ChoiceField(choices=[1, 2], required=False)
    variant = serializers.ChoiceField(choices=VARIANT_CHOICES, required=False)

    def create(self, validated_data):
        """
        Return the HsdtConfig described by the validated keys.
        """
        data = dict(validated_data)
        preset = data.pop('preset', None)
        base = PRESETS[preset] if preset else HsdtConfig()
        return base.replace(**data)


class TrainingConfigSerializer(serializers.Serializer):
    """
    Validates training keys of a config file.

    The validated data gains `schedule` (a Schedule) and `noise_spec`
    (a NoiseSpec, or None to follow the schedule's per-stage noise).
    """
    epochs = serializers.IntegerField(min_value=1, required=False)
    batch = serializers.IntegerField(min_value=1, default=16)
    patch = CommaListField(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2,
                           default=[64, 64])
    steps_per_epoch = serializers.IntegerField(min_value=1, required=False)
    loss = serializers.ChoiceField(choices=LOSS_CHOICES, default=MSE)
    clip_norm = serializers.FloatField(min_value=0.0, required=False)
    schedule = serializers.ChoiceField(choices=SCHEDULE_CHOICES, default=STAGED)
    lr = serializers.FloatField(min_value=0.0, default=1e-3)
    schedule_divisor = serializers.FloatField(min_value=1.0, default=1.0)
    noise = serializers.ChoiceField(choices=KIND_CHOICES, required=False)
    noise_sigma = serializers.FloatField(min_value=0.0, default=50.0)
    noise_sigmas = CommaListField(child=serializers.FloatField(min_value=0.0), min_length=1, required=False)
    noise_sigma_range = CommaListField(child=serializers.FloatField(min_value=0.0), min_length=2, max_length=2,
                                       required=False)
    ca_probability = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    dtype = serializers.ChoiceField(choices=DTYPE_CHOICES, default='float32')

    def validate(self, attrs):
        """
        Resolve the schedule and the training noise.
        """
        if attrs['schedule'] == CONSTANT:
            if 'epochs' not in attrs:
                raise serializers.ValidationError({'epochs': 'A constant schedule needs an epoch count.'})
            if 'noise' not in attrs:
                raise serializers.ValidationError({'noise': 'A constant schedule needs a noise kind.'})
            schedule = constant_schedule(attrs['lr'], attrs['epochs'])
        else:
            schedule = STAGED_SCHEDULE.scaled(attrs['schedule_divisor'])
        if attrs.get('epochs', 0) > schedule.total_epochs:
            raise serializers.ValidationError(
                {'epochs': f"The schedule only covers {schedule.total_epochs} epochs."})
        attrs['schedule'] = schedule

        attrs['noise_spec'] = None
        if 'noise' in attrs:
            options = {'kind': attrs['noise'], 'sigma': attrs['noise_sigma']}
            if 'noise_sigmas' in attrs:
                options['sigmas'] = tuple(attrs['noise_sigmas'])
            if 'noise_sigma_range' in attrs:
                options['sigma_range'] = tuple(attrs['noise_sigma_range'])
            try:
                attrs['noise_spec'] = NoiseSpec(**options)
            except NoiseSpecError as exc:
                raise serializers.ValidationError({'noise': str(exc)})
        return attrs


class ParameterRowSerializer(serializers.Serializer):
    name = serializers.CharField()
    shape = serializers.ListField(child=serializers.IntegerField())
    count = serializers.IntegerField()


class ParamsSerializer(serializers.Serializer):
    """
    Parameter report: the config, its total count and the per-tensor table.
    """
    config = serializers.DictField()
    total = serializers.IntegerField()
    layers = ParameterRowSerializer(many=True)


class LossCurveSerializer(serializers.Serializer):
    step_losses = serializers.ListField(child=serializers.FloatField())
    epoch_losses = serializers.ListField(child=serializers.FloatField())
    learning_rates = serializers.ListField(child=serializers.FloatField())


class AttentionMapSerializer(serializers.Serializer):
    block = serializers.CharField()
    attention = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))


class AttentionRequestSerializer(serializers.Serializer):
    hsi = serializers.FileField()
    mode = serializers.ChoiceField(choices=ATTENTION_CHOICES, default='sa')
    seed = serializers.IntegerField(min_value=0, default=0)


class GradcheckResultSerializer(serializers.Serializer):
    name = serializers.CharField()
    max_relative_error = serializers.FloatField()
    tolerance = serializers.FloatField()
    checked = serializers.IntegerField()
    passed = serializers.BooleanField()

