"""
Base settings for the Deep-ESN toolkit.
"""

from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Django refuses to start without one; nothing here is signed.
SECRET_KEY = config('SECRET_KEY', default='deep-esn-local-only')

# Application definition
DJANGO_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'apps.shared',
    'apps.reservoir',
    'apps.encoders',
    'apps.stack',
    'apps.datasets',
    'apps.metrics',
    'apps.optimizer',
    'apps.diagnostics',
    'apps.experiments',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# No database-backed state: models and results live in files
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework configuration (serializers only, used for config validation)
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}

# Toolkit configuration
DEEP_ESN = {
    'OUTPUT_DIR': config('DEEP_ESN_OUTPUT_DIR', default=str(BASE_DIR / 'runs')),
    'MAX_WORKERS': config('DEEP_ESN_MAX_WORKERS', default=1, cast=int),
    'MODEL_SCHEMA_VERSION': 1,
    'RIDGE_BETA': 1e-5,
    'ELM_AE_LAMBDA': 1e-5,
    'MGS_BURN_IN': 1000,
    'MGS_HISTORY': 1.2,
    'MGS_HISTORY_JITTER': 0.01,
    'PERTURBATION_MAGNITUDE': 0.1,
    'PERTURBATION_WINDOW': 20,
    'SPECTRAL_RADIUS_EPSILON': 1e-3,
    'GA_STAGNATION_TOLERANCE': 1e-9,
    'GA_STAGNATION_GENERATIONS': 10,
    'CONDITION_CUTOFF': 1e-14,
}

# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {asctime} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': True,
        },
        'apps': {
            'handlers': ['console'],
            'level': config('DEEP_ESN_LOG_LEVEL', default='INFO'),
            'propagate': False,
        },
        'deep_esn': {
            'handlers': ['console'],
            'level': config('DEEP_ESN_LOG_LEVEL', default='INFO'),
            'propagate': False,
        },
    },
}
