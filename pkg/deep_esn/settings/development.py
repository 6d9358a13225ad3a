"""
Development settings for the Deep-ESN toolkit.
"""

from .base import *

DEBUG = True

# Keep local runs out of the source tree unless told otherwise
DEEP_ESN['OUTPUT_DIR'] = config('DEEP_ESN_OUTPUT_DIR', default=str(BASE_DIR / 'runs' / 'dev'))

LOGGING['loggers']['apps']['level'] = config('DEEP_ESN_LOG_LEVEL', default='DEBUG')
LOGGING['loggers']['deep_esn']['level'] = config('DEEP_ESN_LOG_LEVEL', default='DEBUG')
