"""
Production settings for the Deep-ESN toolkit (batch reproduction runs).
"""

from .base import *

DEBUG = False

SECRET_KEY = config('SECRET_KEY', default=SECRET_KEY)

DEEP_ESN['MAX_WORKERS'] = config('DEEP_ESN_MAX_WORKERS', default=4, cast=int)

LOGGING['handlers']['console']['level'] = 'INFO'
LOGGING['loggers']['apps']['level'] = config('DEEP_ESN_LOG_LEVEL', default='INFO')
LOGGING['loggers']['deep_esn']['level'] = config('DEEP_ESN_LOG_LEVEL', default='INFO')
