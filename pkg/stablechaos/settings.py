"""
Django settings for stablechaos project.

Generated by 'django-admin startproject' using Django 5.1.4.

For more information on this file, see
https://docs.djangoproject.com/en/5.1/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "django-insecure-stablechaos-local-only")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "rest_framework",
    "noise",
    "particles",
    "limits",
    "measures",
    "experiments",
]

MIDDLEWARE = [
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
]

ROOT_URLCONF = "stablechaos.urls"

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
# https://docs.djangoproject.com/en/5.1/ref/settings/#databases

# 실행 기록(ExperimentRun)만 저장하므로 POSTGRES_DB가 없으면 sqlite로 동작
if os.getenv("POSTGRES_DB"):
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": os.getenv("POSTGRES_DB"),
            "USER": os.getenv("POSTGRES_USER"),
            "PASSWORD": os.getenv("POSTGRES_PASSWORD"),
            "HOST": os.getenv("POSTGRES_HOST"),
            "PORT": os.getenv("POSTGRES_PORT"),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": BASE_DIR / "stablechaos.sqlite3",
        }
    }

# Default primary key field type
# https://docs.djangoproject.com/en/5.1/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


# logging

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {"format": "{asctime} {levelname} {name} {message}", "style": "{"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "simple"},
    },
    "loggers": {
        # 각 app의 logger는 getLogger(__name__)로 생성되므로 app 이름으로 레벨을 지정
        app: {"handlers": ["console"], "level": os.getenv("STABLECHAOS_LOG_LEVEL", "INFO"), "propagate": False}
        for app in ("noise", "particles", "limits", "measures", "experiments")
    },
}


# simulation

OUTPUT_DIR = Path(os.getenv("STABLECHAOS_OUTPUT_DIR", BASE_DIR / "output"))

# 실험 설정 파일에서 값을 생략했을 때 사용되는 기본값
SIMULATION = {
    "THREADS": int(os.getenv("STABLECHAOS_THREADS", 1)),
    "DRIFT_STEP": 1e-2,  # finite system 내 drift 적분의 최대 substep
    "LIMIT_STEP": 1e-3,  # limit system의 시간 격자 간격 h
    "LIMIT_PARTICLES": 2000,  # directing measure를 근사하는 입자 수 M
    "KS_CUTOFF": 0.05,  # stable CLT의 KS 통계량 허용치
    "KS_TREND_SLACK": 0.01,  # N이 커질 때 KS 통계량이 증가해도 되는 폭
    "P_VALUE_FLOOR": 0.01,
    "PASS_FRACTION": 0.95,
    "SELFCHECK_FACTOR": 2.0,  # limit self-check: W1 <= factor * Monte Carlo 표준오차
    "BOOTSTRAP_RESAMPLES": 200,
    "TEST_FUNCTION": "arctan",  # common noise 실험에서 사용하는 bounded test function
}


# celery

CELERY_BROKER_URL = os.getenv("CELERY_BROKER_URL")
CELERY_RESULT_BACKEND = os.getenv("CELERY_RESULT_BACKEND")

# broker가 없으면 worker 없이 호출한 프로세스에서 바로 실행
CELERY_TASK_ALWAYS_EAGER = not CELERY_BROKER_URL
# eager 실행에서 task 예외를 호출한 쪽으로 전달
CELERY_TASK_EAGER_PROPAGATES = True

CELERY_ACCEPT_CONTENT = ["json"]  # 요청을 받을 수 있는 content type
CELERY_TASK_SERIALIZER = "json"  # task 직렬화
