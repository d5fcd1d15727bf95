"""
Django settings for core project.

Generated by 'django-admin startproject' using Django 5.1.1.

For more information on this file, see
https://docs.djangoproject.com/en/5.1/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
import sys
from pathlib import Path

from corsheaders.defaults import default_headers

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Quick-start development settings - unsuitable for production
# See https://docs.djangoproject.com/en/5.1/howto/deployment/checklist/

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-hsdt-local-development-only')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('DJANGO_DEBUG', '1') == '1'

ALLOWED_HOSTS = ['localhost', '127.0.0.1']


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.staticfiles',
    'rest_framework',
    'corsheaders',
    'hsdt_app',
    'restoration_app',
]

MIDDLEWARE = [
    'corsheaders.middleware.CorsMiddleware',
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'core.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
            ],
        },
    },
]

WSGI_APPLICATION = 'core.wsgi.application'


# Every computation is stateless; nothing is stored in a database.

DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.1/howto/static-files/

STATIC_URL = 'static/'

REST_FRAMEWORK = {
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny'
    ],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_PARSER_CLASSES': [
        'rest_framework.parsers.JSONParser',
        'rest_framework.parsers.MultiPartParser',
        'rest_framework.parsers.FormParser',
    ],
}

CORS_ALLOW_ALL_ORIGINS = True

CORS_ALLOW_HEADERS = list(default_headers)

DATA_UPLOAD_MAX_MEMORY_SIZE = 256 * 1024 * 1024


# Network, metric and solver defaults, read through hsdt_app.conf.hsdt_settings.

HSDT = {
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
    'PROGRESS': os.environ.get('HSDT_PROGRESS', '1') == '1' and 'test' not in sys.argv[1:2],
    'CHECKPOINT': os.environ.get('HSDT_CHECKPOINT') or None,
    'CHECKPOINT_CONFIG': os.environ.get('HSDT_CHECKPOINT_CONFIG', 'hsdt-s'),
}


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'hsdt_app': {
            'handlers': ['console'],
            'level': os.environ.get('HSDT_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
        'restoration_app': {
            'handlers': ['console'],
            'level': os.environ.get('HSDT_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
