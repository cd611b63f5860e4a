# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""NDJSON solve log and trajectory dumps for inspecting a run after the fact."""

from __future__ import annotations

import datetime as dt
import json
import threading
from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np


class RunLogger:
    """Logs one JSON record per relaxation solve."""

    def __init__(self, log_path: Path, enabled: bool = True):
        self.log_path = Path(log_path)
        self.enabled = enabled
        self.record_counter = 0
        self._lock = threading.Lock()

        if self.enabled:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "w") as f:
                f.write("# momentvv solve log\n")
                f.write(f"# Generated: {dt.datetime.now().isoformat()}\n")
                f.write("# Format: NDJSON (one JSON object per line)\n")
                f.write("# Each line contains: case, variant, order, status, bound, gap, iterations, wall time\n\n")

    def log_solve(
        self,
        case: str,
        variant: str,
        order: int,
        result: Dict[str, Any],
        metadata: Dict[str, Any] | None = None,
    ) -> None:
        if not self.enabled:
            return
        with self._lock:
            self.record_counter += 1
            entry = {
                "record_id": self.record_counter,
                "timestamp": dt.datetime.now().isoformat(),
                "case": case,
                "variant": variant,
                "order": order,
                "metadata": metadata or {},
                "result": result,
            }
            with open(self.log_path, "a") as f:
                f.write(json.dumps(entry, default=_jsonable) + "\n")

    def get_summary(self) -> Dict[str, Any]:
        return {
            "log_path": str(self.log_path),
            "total_records": self.record_counter,
            "enabled": self.enabled,
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class TrajectoryDump:
    """Whitespace-separated columns (t, states..., cell), one row per sample."""

    def __init__(self, path: Path, states: Sequence[str]):
        self.path = Path(path)
        self.states = tuple(states)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w") as f:
            f.write("# momentvv trajectory dump\n")
            f.write("# columns: t " + " ".join(self.states) + " cell\n")

    def write(self, label: str, times: np.ndarray, states: np.ndarray, cells: np.ndarray) -> None:
        with open(self.path, "a") as f:
            f.write(f"# trajectory {label}\n")
            for t, x, cell in zip(times, states, cells):
                row = " ".join(f"{v:.10g}" for v in x)
                f.write(f"{t:.10g} {row} {int(cell)}\n")
            f.write("\n")
