"""
Settings for the HSDT apps are all namespaced in the HSDT setting.
For example your project's `settings.py` file might look like this:

HSDT = {
    'BN_EPSILON': 1e-5,
    'PROGRESS': False,
}

This module provides the `hsdt_settings` object, used to access
HSDT settings, checking for user settings first, then falling
back to the defaults.
"""
from django.conf import settings
from django.core.signals import setting_changed

DEFAULTS = {
    'DTYPE': 'float32',
    'BN_EPSILON': 1e-5,
    'BN_MOMENTUM': 0.1,
    'PSNR_CAP': 100.0,
    'SSIM_WINDOW': 11,
    'SSIM_SIGMA': 1.5,
    'SSIM_K1': 0.01,
    'SSIM_K2': 0.03,
    'CG_ITERATIONS': 10,
    'CG_TOLERANCE': 1e-6,
    'GRADCHECK_STEP': 1e-4,
    'GRADCHECK_TOLERANCE': 1e-4,
    'GRADCHECK_FLOOR': 1e-6,
    'PROGRESS': True,
    'CHECKPOINT': None,
    'CHECKPOINT_CONFIG': 'hsdt-s',
}


class HsdtSettings:
    """
    Lazy accessor over `settings.HSDT` with built-in defaults.

    Attribute access returns the user value when present, the default otherwise.
    Values are cached until Django signals a settings change.
    """

    def __init__(self, defaults=None):
        self.defaults = defaults or DEFAULTS
        self._cached_attrs = set()

    @property
    def user_settings(self):
        if not hasattr(self, '_user_settings'):
            self._user_settings = getattr(settings, 'HSDT', {})
        return self._user_settings

    def __getattr__(self, attr):
        if attr not in self.defaults:
            raise AttributeError(f"Invalid HSDT setting: '{attr}'")

        try:
            val = self.user_settings[attr]
        except KeyError:
            val = self.defaults[attr]

        self._cached_attrs.add(attr)
        setattr(self, attr, val)
        return val

    def reload(self):
        for attr in self._cached_attrs:
            delattr(self, attr)
        self._cached_attrs.clear()
        if hasattr(self, '_user_settings'):
            delattr(self, '_user_settings')


hsdt_settings = HsdtSettings(DEFAULTS)


def reload_hsdt_settings(*args, **kwargs):
    if kwargs['setting'] == 'HSDT':
        hsdt_settings.reload()


setting_changed.connect(reload_hsdt_settings)
