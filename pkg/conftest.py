"""Configure Django for pytest the way `manage.py test` does."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
django.setup()


def pytest_configure(config):
    from django.test.utils import setup_test_environment
    setup_test_environment()
