"""
Django settings for the LAIP project.

The project is a library plus management-command CLI: there is no URL
routing, no WSGI entry point and no admin site.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

from pathlib import Path
import os
from decouple import config
import dj_database_url
from dotenv import load_dotenv
load_dotenv()
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = config('SECRET_KEY', default='laip-local-only-not-a-secret')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

DJANGO_APPS = [
    'django.contrib.contenttypes',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'environment',
    'oracle',
    'providers',
    'engine',
    'baselines',
    'open_ended',
    'metrics',
    'experiments',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# Prompt templates are plain text, so autoescaping stays off.
TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'autoescape': False,
            'context_processors': [],
        },
    },
]


# Database
# https://docs.djangoproject.com/en/5.0/ref/settings/#databases

DATABASES = {
    'default': dj_database_url.config(
        default=os.environ.get('DATABASE_URL', f"sqlite:///{BASE_DIR / 'db.sqlite3'}")
    )
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# LAIP experiment settings
LAIP = {
    'RUNS_DIR': config('LAIP_RUNS_DIR', default=str(BASE_DIR / 'runs')),
    'CACHE_PATH': config('LAIP_CACHE_PATH', default=str(BASE_DIR / 'runs' / 'cache.jsonl')),
    'API_BASE_URL': config('LAIP_API_BASE_URL', default='https://api.openai.com/v1'),
    # Credentials come from the environment only.
    'API_KEY': config('LAIP_API_KEY', default=''),
    'CHAT_MODEL': config('LAIP_CHAT_MODEL', default='gpt-4o'),
    'EMBEDDING_MODEL': config('LAIP_EMBEDDING_MODEL', default='text-embedding-3-small'),
    'REQUEST_TIMEOUT': config('LAIP_REQUEST_TIMEOUT', default=60, cast=int),
    'PROMPT_VERSION': config('LAIP_PROMPT_VERSION', default='v1'),
    'PROBABILITY_FLOOR': config('LAIP_PROBABILITY_FLOOR', default=1e-6, cast=float),
    'PARSE_RETRIES': config('LAIP_PARSE_RETRIES', default=3, cast=int),
    'P_OPEN': 0.95,
    'EPSILON': config('LAIP_EPSILON', default=0.01, cast=float),
    'SOFTMAX_TEMPERATURE': config('LAIP_SOFTMAX_TEMPERATURE', default=1.0, cast=float),
    'HYPOTHESIS_TEMPERATURE': 0.7,
    'LIKELIHOOD_TEMPERATURE': 0.0,
    'ACTOR_TEMPERATURE': config('LAIP_ACTOR_TEMPERATURE', default=0.7, cast=float),
    'PROPOSED_ACTIONS': config('LAIP_PROPOSED_ACTIONS', default=6, cast=int),
    'MAX_TOKENS': config('LAIP_MAX_TOKENS', default=1024, cast=int),
    'MAX_WORKERS': config('LAIP_MAX_WORKERS', default=4, cast=int),
    'EMBEDDING_DIM': 64,
}


# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': config('LAIP_LOG_LEVEL', default='INFO'),
    },
    'loggers': {
        'urllib3': {
            'level': 'WARNING',
        },
    },
}
