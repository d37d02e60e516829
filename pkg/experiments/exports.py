import json
import logging
from pathlib import Path

from django.utils import timezone

logger = logging.getLogger(__name__)


def write_csv(frame, path: Path):
    with open(path, "w", newline="") as f:
        f.write(f"# generated {timezone.now().isoformat()}\n")
        frame.to_csv(f, index=False)


def _write_dat(frame, path: Path):
    # gnuplot용: 공백 구분, 헤더는 주석 처리, 빈 값은 NaN
    with open(path, "w") as f:
        f.write("# " + " ".join(frame.columns) + "\n")
        frame.to_csv(f, sep=" ", header=False, index=False, na_rep="NaN")


def write_summary(summary: dict, path: Path):
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")


def export_frame(frame, out_dir, stem) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    write_csv(frame, csv_path)
    _write_dat(frame, out_dir / f"{stem}.dat")
    return csv_path


def export_result(result, out_dir) -> list[Path]:
    """Write ``<experiment>.csv``, ``.dat`` and ``.summary.json`` plus one CSV per extra table."""
    out_dir = Path(out_dir)
    paths = [export_frame(result.frame, out_dir, result.experiment)]
    for name, frame in sorted(result.extra.items()):
        paths.append(export_frame(frame, out_dir, f"{result.experiment}.{name}"))
    summary_path = out_dir / f"{result.experiment}.summary.json"
    write_summary(result.summary, summary_path)
    paths.append(summary_path)
    logger.info("%s written to %s", result.experiment, out_dir)
    return paths
