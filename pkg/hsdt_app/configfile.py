"""
Flat key=value experiment configs.

One `key = value` pair per line; blank lines and lines starting with `#`
are ignored. Model keys mirror HsdtConfig (plus `preset`), training keys
mirror TrainingConfigSerializer. A preset name (hsdt-s, hsdt-m, hsdt-l) is
accepted wherever a config path is.
"""
import logging
from pathlib import Path

from .api.serializers import HsdtConfigSerializer, TrainingConfigSerializer
from .exceptions import ConfigError
from .network import PRESETS

logger = logging.getLogger(__name__)


def parse_config(text):
    """
    Parse key=value text into a dict of strings.

    Raises:
        ConfigError: On a line without '=', an empty key, or a repeated key.
    """
    values = {}
    errors = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep or not key:
            errors[f"line {number}"] = [f"Expected 'key = value', got '{line}'."]
        elif key in values:
            errors[key] = [f"Repeated on line {number}."]
        else:
            values[key] = value.strip()
    if errors:
        raise ConfigError('Malformed config file.', errors)
    return values


def read_config(path):
    return parse_config(Path(path).read_text(encoding='utf-8'))


def validate_config(serializer_class, data):
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigError('Invalid config.', {key: [str(m) for m in messages]
                                              for key, messages in serializer.errors.items()})
    return serializer


def model_config(values):
    """HsdtConfig from a dict of model keys."""
    return validate_config(HsdtConfigSerializer, values).save()


def load_model_config(source):
    """
    HsdtConfig from a preset name or a config file (training keys are ignored).
    """
    if source in PRESETS:
        return PRESETS[source]
    values = read_config(source)
    model_keys = set(HsdtConfigSerializer().fields)
    return model_config({key: value for key, value in values.items() if key in model_keys})


def load_training_config(source):
    """
    Split a config file into its model and training parts.

    Returns:
        tuple[HsdtConfig, dict]: The model config and the validated training options.

    Raises:
        ConfigError: Unknown keys or invalid values, reported per key.
    """
    values = {} if source in PRESETS else read_config(source)
    if source in PRESETS:
        values['preset'] = source
    model_keys = set(HsdtConfigSerializer().fields)
    training_keys = set(TrainingConfigSerializer().fields)
    unknown = sorted(set(values) - model_keys - training_keys)
    if unknown:
        raise ConfigError('Unknown config keys.', {key: ['Unknown key.'] for key in unknown})

    config = model_config({key: value for key, value in values.items() if key in model_keys})
    training = validate_config(TrainingConfigSerializer,
                               {key: value for key, value in values.items() if key in training_keys})
    logger.debug("Loaded config %s with training options %s.", config, sorted(training.validated_data))
    return config, training.validated_data
