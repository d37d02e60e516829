from celery import shared_task

from .models import ExperimentRun
from .serializers import ExperimentConfigSerializer
from .services import execute_run


# worker에서는 ledger에 저장된 config를 다시 검증한 뒤 실행
@shared_task
def run_experiment_task(run_id, out_dir):
    run = ExperimentRun.objects.get(pk=run_id)
    serializer = ExperimentConfigSerializer(data=run.config)
    serializer.is_valid(raise_exception=True)
    result = execute_run(run, serializer.save(), out_dir)
    return result.summary
