from django.apps import AppConfig


class HsdtAppConfig(AppConfig):
    name = 'hsdt_app'
    verbose_name = 'HSDT network'
