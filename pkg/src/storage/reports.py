"""
Report emission: CSV for tables, JSON for machine consumption, always both
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from src.core.logger import get_logger
from src.eval.report import ReportTable

logger = get_logger(__name__)


def write_csv(rows: Iterable[Dict[str, Any]], fieldnames: Sequence[str], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def write_json(payload: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_report(table: ReportTable, out_dir: str, stem: Optional[str] = None) -> Tuple[Path, Path]:
    """<stem>.csv with median rates and <stem>.json with every per-seed breakdown"""
    root = Path(out_dir)
    stem = stem or table.title
    csv_path = write_csv(table.to_rows(), table.fieldnames(), root / f"{stem}.csv")
    json_path = write_json(table.to_dict(), root / f"{stem}.json")
    logger.info(f"Wrote report '{table.title}' to {csv_path} and {json_path}")
    return csv_path, json_path


LOSS_LOG_FIELDS: List[str] = ["epoch", "stage", "loss", "loss_l1", "loss_l2", "alpha"]


def write_loss_log(history: Iterable[Dict[str, Any]], path: str) -> Path:
    """Per-epoch training losses, one line per (stage, epoch)"""
    return write_csv(history, LOSS_LOG_FIELDS, Path(path))
