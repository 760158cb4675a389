"""
Django settings for the kac_lab project.

The project has no web surface: Django provides configuration, the run-record
database and the management-command CLI (``python manage.py simulate`` etc).

All tunables come from the environment (or a ``.env`` file next to
``manage.py``) through django-environ.
"""
import os
from pathlib import Path
import environ

env = environ.Env(
    DEBUG=(bool, False),
    KWL_THREADS=(int, os.cpu_count() or 1),
    KWL_SEED=(int, 20240101),
    KWL_BLOCK_SIZE=(int, 1024),
    KWL_RENORMALIZE_EVERY=(int, 1024),
    KWL_MAX_SNAPSHOT_BYTES=(int, 2 * 1024 ** 3),
    KWL_GRID_CELLS=(int, 20000),
    KWL_GRID_MAX_ENTRIES=(int, 120_000_000),
    KWL_LOG_LEVEL=(str, 'INFO'),
    KWL_RECORD_RUNS=(bool, True),
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

environ.Env.read_env(os.path.join(BASE_DIR, '.env'))


SECRET_KEY = env('SECRET_KEY', default='kac-lab-insecure-local-key')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []


INSTALLED_APPS = [
    # Local
    'walklab',
]

DATABASES = {
    'default': env.db('DATABASE_URL', default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}"),
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'lab': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'lab',
        },
    },
    'loggers': {
        'walklab': {
            'handlers': ['console'],
            'level': env('KWL_LOG_LEVEL'),
            'propagate': False,
        },
    },
}


# Lab settings
KWL_THREADS = env('KWL_THREADS')
KWL_SEED = env('KWL_SEED')
KWL_BLOCK_SIZE = env('KWL_BLOCK_SIZE')
KWL_RENORMALIZE_EVERY = env('KWL_RENORMALIZE_EVERY')
KWL_MAX_SNAPSHOT_BYTES = env('KWL_MAX_SNAPSHOT_BYTES')
KWL_GRID_CELLS = env('KWL_GRID_CELLS')
KWL_GRID_MAX_ENTRIES = env('KWL_GRID_MAX_ENTRIES')
KWL_OUTPUT_DIR = Path(env('KWL_OUTPUT_DIR', default=str(BASE_DIR / 'runs')))
KWL_RECORD_RUNS = env('KWL_RECORD_RUNS')
