# django가 시작될 때 celery app을 불러와 shared_task가 이 app의 설정(eager 모드 포함)을 사용하도록 함
from conf.celery.celery import app as celery_app

__all__ = ("celery_app",)
