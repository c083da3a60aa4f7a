"""
Django settings for core project.

Generated by 'django-admin startproject' using Django 5.2.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


def env_floats(name, default):
    value = os.environ.get(name)
    if value is None:
        return default
    return tuple(float(item) for item in value.split(",") if item.strip())


def env_bool(name, default=False):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY", "django-insecure-capsules-benchmark-local-key-change-me"
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = env_bool("DJANGO_DEBUG", True)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    # Third-party apps
    "rest_framework",
    # Local apps
    "capsules",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "core.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("CAPSULES_DB", BASE_DIR / "db.sqlite3"),
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.2/howto/static-files/

STATIC_URL = "static/"

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Benchmark defaults; every key can be overridden by a CAPSULES_<KEY> environment variable
CAPSULES = {
    "OUTPUT_DIR": os.environ.get("CAPSULES_OUTPUT_DIR", str(BASE_DIR / "runs" / "latest")),
    "WORKERS": int(os.environ.get("CAPSULES_WORKERS", 1)),
    "SEED": int(os.environ.get("CAPSULES_SEED", 7)),
    "DRAWS": int(os.environ.get("CAPSULES_DRAWS", 512)),
    "RESTARTS": int(os.environ.get("CAPSULES_RESTARTS", 5)),
    "LAMBDA_MAX": float(os.environ.get("CAPSULES_LAMBDA_MAX", 1e4)),
    "ANNEAL_FACTOR": float(os.environ.get("CAPSULES_ANNEAL_FACTOR", 10.0)),
    "RANSAC_TOL": float(os.environ.get("CAPSULES_RANSAC_TOL", 0.1)),
    "RANSAC_REFINE": env_bool("CAPSULES_RANSAC_REFINE", False),
    "RANSAC_RELAXED_TOLS": env_floats("CAPSULES_RANSAC_RELAXED_TOLS", (0.2, 0.4)),
    "BASIS_POLICY": os.environ.get("CAPSULES_BASIS_POLICY", "fixed"),
    "SINKHORN_TOL": float(os.environ.get("CAPSULES_SINKHORN_TOL", 1e-10)),
    "SINKHORN_MAX_ITERS": int(os.environ.get("CAPSULES_SINKHORN_MAX_ITERS", 1000)),
    "BACKEND": os.environ.get("CAPSULES_BACKEND", "pool"),
}


# Logging
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name} {process:d} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "capsules": {
            "handlers": ["console"],
            "level": os.environ.get("CAPSULES_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# Celery Configuration
CELERY_BROKER_URL = os.environ.get("CELERY_BROKER_URL", "redis://localhost:6379/0")
CELERY_RESULT_BACKEND = os.environ.get("CELERY_RESULT_BACKEND", "redis://localhost:6379/0")
CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"
CELERY_TIMEZONE = TIME_ZONE
CELERY_TASK_ALWAYS_EAGER = env_bool("CELERY_TASK_ALWAYS_EAGER", False)
CELERY_TASK_EAGER_PROPAGATES = True
