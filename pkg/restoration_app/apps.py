from django.apps import AppConfig


class RestorationAppConfig(AppConfig):
    name = 'restoration_app'
    verbose_name = 'HSI degradation and restoration'
