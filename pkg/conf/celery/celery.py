# celery는 django와 함께 사용할 수 있는 task queue
# 긴 실험을 worker에 맡길 때 사용하며 broker가 없으면 settings에서 eager 모드로 동작
from __future__ import absolute_import, unicode_literals
import os

from celery import Celery

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "stablechaos.settings")

app = Celery("stablechaos")
app.config_from_object("django.conf:settings", namespace="CELERY")
# task 모듈을 모든 django app에서 찾도록 함
app.autodiscover_tasks()
