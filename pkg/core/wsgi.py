"""
WSGI entry point serving the HSDT HTTP API (parameter reports, attention
maps, metrics), e.g. `gunicorn core.wsgi`.

The model behind /api/attention-maps/ comes from the HSDT_CHECKPOINT and
HSDT_CHECKPOINT_CONFIG environment variables.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')

application = get_wsgi_application()
