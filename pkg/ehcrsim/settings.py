"""
Django settings for ehcrsim project.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY
# Nothing is served over HTTP; the key only satisfies Django's startup checks.
SECRET_KEY = config('SECRET_KEY', default='ehcrsim-local-only')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    # Third party apps
    'rest_framework',

    # Local apps
    'phy',
    'occupancy',
    'policy',
    'engine',
    'experiments',
]

# The simulator keeps no persistent state.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name} | {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
}

# Celery Configuration
# Eager mode runs replication chunks in-process; point the broker at Redis
# and start workers to spread them out.
CELERY_BROKER_URL = config('REDIS_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = config('REDIS_URL', default='redis://localhost:6379/0')
CELERY_TASK_ALWAYS_EAGER = config('CELERY_TASK_ALWAYS_EAGER', default=True, cast=bool)
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'

# Simulator Configuration
EHCR_DEFAULT_ITERATIONS = config('EHCR_DEFAULT_ITERATIONS', default=10_000, cast=int)
EHCR_CHUNK_SIZE = config('EHCR_CHUNK_SIZE', default=250, cast=int)
EHCR_RESULT_TIMEOUT = config('EHCR_RESULT_TIMEOUT', default=3600, cast=int)
EHCR_RUN_SLOW_TESTS = config('EHCR_RUN_SLOW_TESTS', default=False, cast=bool)
