import json
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from experiments.models import ExperimentRun
from experiments.serializers import ExperimentConfigSerializer
from experiments.services import EXPERIMENTS, execute_run
from experiments.tasks import run_experiment_task
from stablechaos.exceptions import NumericalAbort

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def load_config(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CommandError(f"cannot read config {path}: {e}", returncode=2)


def validation_message(error):
    return json.dumps(error.detail, sort_keys=True, default=str)


class Command(BaseCommand):
    help = "Run one validation experiment and write <out>/<experiment>.csv with its summary."

    def add_arguments(self, parser):
        parser.add_argument("experiment", choices=EXPERIMENTS)
        parser.add_argument("--config", help="JSON config file (default: experiments/configs/<experiment>.json)")
        parser.add_argument("--seed", type=int, help="root seed, overrides the config")
        parser.add_argument("--out", help="output directory (default: settings.OUTPUT_DIR)")
        parser.add_argument("--threads", type=int, help="replica fan-out; results do not depend on it")
        parser.add_argument("--dry-run", action="store_true", help="validate and print the resolved config only")
        parser.add_argument("--enqueue", action="store_true", help="hand the run to a celery worker")

    def handle(self, *args, **options):
        name = options["experiment"]
        data = load_config(options["config"] or CONFIG_DIR / f"{name}.json")
        data["experiment"] = name
        if options["seed"] is not None:
            data["root_seed"] = options["seed"]
        if options["threads"] is not None:
            data["threads"] = options["threads"]
        out_dir = Path(options["out"] or data.get("out_path") or settings.OUTPUT_DIR)
        data["out_path"] = str(out_dir)

        serializer = ExperimentConfigSerializer(data=data)
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as e:
            raise CommandError(f"invalid config: {validation_message(e)}", returncode=2)
        cfg = serializer.save()

        if options["dry_run"]:
            self.stdout.write(json.dumps(cfg.describe(), indent=2, sort_keys=True))
            self.stdout.write(self.style.SUCCESS(f"{name} config is valid."))
            return

        run = ExperimentRun.objects.create(experiment=name, root_seed=str(cfg.root_seed), config=cfg.describe())
        try:
            if options["enqueue"]:
                # broker가 없으면 eager로 실행되고 예외가 그대로 올라옴
                run_experiment_task.delay(run.pk, str(out_dir))
                self.stdout.write(self.style.SUCCESS(f"{name} queued as run {run.pk}."))
                return
            self.stdout.write(self.style.WARNING(f"Running {name} (seed {cfg.root_seed}, {cfg.replicas} replicas)..."))
            result = execute_run(run, cfg, out_dir)
        except NumericalAbort as e:
            raise CommandError(f"numerical abort at position {e.position}: {e}", returncode=3)
        except ValueError as e:
            raise CommandError(str(e), returncode=2)

        for key, value in sorted(result.summary["flags"].items()):
            self.stdout.write(f"  {key}: {value}")
        self.stdout.write(self.style.SUCCESS(f"{name} complete, results in {run.output_path}"))
