from __future__ import annotations
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

DEFAULT_SETTINGS_PATH = Path(__file__).resolve().parent.parent / "config" / "defaults.json"


class Settings:
    def __init__(self, raw: Dict[str, Any]):
        self.raw = raw

    @staticmethod
    def load(path: Optional[Path] = None) -> "Settings":
        if path is None:
            path = Path(os.getenv("MPT_DEFAULTS_PATH", str(DEFAULT_SETTINGS_PATH)))
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return Settings(raw)

    def truncation(self) -> Dict[str, Any]:
        return dict(self.raw.get("truncation", {}))

    def sweep(self) -> Dict[str, Any]:
        return dict(self.raw.get("sweep", {}))

    def budget(self) -> Dict[str, Any]:
        return dict(self.raw.get("budget", {}))

    def oracle(self) -> Dict[str, Any]:
        return dict(self.raw.get("oracle", {}))

    def collapse(self) -> Dict[str, Any]:
        return dict(self.raw.get("analysis", {}).get("collapse", {}))

    def log_fit(self) -> Dict[str, Any]:
        return dict(self.raw.get("analysis", {}).get("log_fit", {}))

    def default_cutoff(self) -> float:
        return float(self.truncation().get("cutoff", 1e-10))

    def default_runs(self) -> int:
        return int(self.sweep().get("runs_per_point", 500))

    def default_workers(self) -> int:
        env = os.getenv("MPT_WORKERS")
        if env:
            return max(1, int(env))
        return max(1, int(self.sweep().get("workers", 1)))

    def oracle_max_sites(self) -> int:
        return int(self.oracle().get("max_sites", 20))
