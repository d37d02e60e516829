from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from experiments.exports import write_csv
from experiments.serializers import SimulationConfigSerializer
from limits.services import simulate_limit
from noise.streams import SeedTree
from particles.services import export_events, export_states, simulate_finite
from stablechaos.exceptions import NumericalAbort

from .experiment import load_config, validation_message


def limit_states_frame(bundle):
    return pd.DataFrame(
        {
            "time": bundle.grid.repeat(bundle.M),
            "particle": list(range(bundle.M)) * bundle.grid.size,
            "x": bundle.states.ravel(),
        }
    )


class Command(BaseCommand):
    help = "Simulate one N-particle bundle (or a limit bundle with --limit) and export it as CSV."

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="JSON simulation config")
        parser.add_argument("--seed", type=int, help="root seed, overrides the config")
        parser.add_argument("--out", help="output directory (default: settings.OUTPUT_DIR)")
        parser.add_argument("--limit", action="store_true", help="simulate the limit system with M particles instead")

    def handle(self, *args, **options):
        data = load_config(options["config"])
        if options["seed"] is not None:
            data["root_seed"] = options["seed"]
        serializer = SimulationConfigSerializer(data=data)
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as e:
            raise CommandError(f"invalid config: {validation_message(e)}", returncode=2)
        cfg = serializer.save()
        out_dir = Path(options["out"] or settings.OUTPUT_DIR)
        out_dir.mkdir(parents=True, exist_ok=True)
        seeds = SeedTree(cfg.root_seed)

        try:
            if options["limit"]:
                self._limit(cfg, seeds, out_dir)
            else:
                self._finite(cfg, seeds, out_dir)
        except NumericalAbort as e:
            raise CommandError(f"numerical abort at position {e.position}: {e}", returncode=3)
        except ValueError as e:
            raise CommandError(str(e), returncode=2)

    def _finite(self, cfg, seeds, out_dir):
        self.stdout.write(self.style.WARNING(f"Simulating N={cfg.N} particles up to T={cfg.T}..."))
        bundle = simulate_finite(
            cfg.model,
            cfg.N,
            cfg.T,
            cfg.doa,
            seeds,
            output_times=cfg.output_times,
            collateral_scale=cfg.collateral_scale,
            drift_step=cfg.drift_step,
        )
        write_csv(export_events(bundle), out_dir / "events.csv")
        write_csv(export_states(bundle), out_dir / "states.csv")
        self.stdout.write(self.style.SUCCESS(f"{len(bundle.events)} candidates ({bundle.events.n_accepted} accepted) written to {out_dir}"))

    def _limit(self, cfg, seeds, out_dir):
        self.stdout.write(self.style.WARNING(f"Simulating the limit system with M={cfg.M}, h={cfg.h} up to T={cfg.T}..."))
        bundle = simulate_limit(cfg.model, cfg.M, cfg.T, cfg.h, cfg.stable, seeds, output_times=cfg.output_times)
        write_csv(limit_states_frame(bundle), out_dir / "limit_states.csv")
        write_csv(bundle.path.to_frame(), out_dir / "stable_path.csv")
        self.stdout.write(self.style.SUCCESS(f"{bundle.path.increments.size} steps written to {out_dir}"))
