from __future__ import annotations
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Set, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .circuit import TrajectoryRecord
from .seeding import rate_key

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
AGGREGATE_FILE = "aggregate.csv"
BOND_STATS_FILE = "bond_stats.csv"
RESOLVED_CONFIG_FILE = "resolved_config.json"
FIT_REPORT_FILE = "fit_report.json"

RecordKey = Tuple[int, str, int]


def record_key(record: TrajectoryRecord) -> RecordKey:
    run = -1 if record.run_index is None else int(record.run_index)
    return (record.config.n_sites, rate_key(record.config.meas_rate), run)


def init_output_dir(out_dir: Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def append_record(path: Path, record: TrajectoryRecord) -> None:
    """Append one record as a single JSON line and flush."""
    with open(path, "a", encoding="utf-8") as f:
        f.write(record.model_dump_json() + "\n")
        f.flush()


def repair_tail(path: Path) -> bool:
    """Drop a torn final line so later appends start on a fresh line."""
    path = Path(path)
    if not path.exists():
        return False
    data = path.read_bytes()
    if not data or data.endswith(b"\n"):
        return False
    keep = data.rfind(b"\n") + 1
    with open(path, "r+b") as f:
        f.truncate(keep)
    logger.warning("dropped %d bytes of a torn record at the end of %s", len(data) - keep, path)
    return True


def read_records(path: Path) -> List[TrajectoryRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records: List[TrajectoryRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(TrajectoryRecord.model_validate_json(line))
            except ValidationError:
                # a killed writer leaves at most one torn line
                logger.warning("skipping unreadable record at %s:%d", path, lineno)
    return records


def completed_keys(records: Iterable[TrajectoryRecord]) -> Set[RecordKey]:
    """Keys of every persisted trajectory, complete or quarantined."""
    return {record_key(r) for r in records}


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    Path(path).write_text(json.dumps(_to_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)


def write_table(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, index=False)
    return Path(path)
