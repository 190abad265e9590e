"""Experiment reports: byte-deterministic JSON, CSV grids and a timing sidecar."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..stats import FAIL, PASS, REPORT_ONLY, Check, Estimate
from .config import ExperimentConfig

GRID_COLUMNS = ["n", "s", "quantity", "value", "se"]


def clean(obj):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


class Report:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.records: list[dict] = []
        self.estimates: list[dict] = []
        self.grids: dict[str, list[list]] = {}
        self.tables: dict[str, tuple[list[str], list[list]]] = {}
        self.status = "complete"
        self.error: str | None = None
        self._t0 = time.perf_counter()

    # -- collection --------------------------------------------------------
    def check(self, check: Check, anchor: str, **context) -> Check:
        rec = check.to_record()
        rec["anchor"] = check.anchor or anchor
        if context:
            rec["context"] = context
        self.records.append(rec)
        return check

    def checks(self, checks, anchor: str, **context):
        for c in checks:
            self.check(c, anchor, **context)

    def estimate(self, est: Estimate, anchor: str, **context) -> Estimate:
        rec = est.to_record()
        rec["anchor"] = anchor
        if context:
            rec["context"] = context
        self.estimates.append(rec)
        return est

    def grid_row(self, grid: str, n: int, s: int, quantity: str, value: float, se: float):
        self.grids.setdefault(grid, []).append([int(n), int(s), quantity, float(value), float(se)])

    def table(self, name: str, header: list[str], rows: list[list]):
        self.tables[name] = (header, rows)

    # -- summary -----------------------------------------------------------
    def verdict_counts(self) -> dict:
        counts = {PASS: 0, FAIL: 0, REPORT_ONLY: 0}
        for r in self.records:
            counts[r["verdict"]] += 1
        return counts

    @property
    def failed(self) -> bool:
        return self.verdict_counts()[FAIL] > 0

    def artifact_names(self) -> list[str]:
        stem = self.config.name
        names = [f"{stem}.json"]
        names += [f"{stem}_{g}.csv" for g in sorted(self.grids)]
        names += [f"{stem}_{t}.csv" for t in sorted(self.tables)]
        return names

    def to_dict(self) -> dict:
        # output_dir is where the report goes, not what it says
        config = {k: v for k, v in self.config.to_dict().items() if k != "output_dir"}
        d = {"experiment": self.config.name, "config": config,
             "status": self.status, "summary": self.verdict_counts(), "records": self.records,
             "estimates": self.estimates, "artifacts": self.artifact_names()}
        if self.error:
            d["error"] = self.error
        return clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    # -- persistence -------------------------------------------------------
    @staticmethod
    def _csv(header, rows) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()

    def write(self, out_dir: str | Path | None = None) -> list[Path]:
        out = Path(out_dir if out_dir is not None else self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.config.name
        paths = [out / f"{stem}.json"]
        paths[0].write_text(self.to_json())
        for g, rows in sorted(self.grids.items()):
            p = out / f"{stem}_{g}.csv"
            p.write_text(self._csv(GRID_COLUMNS, rows))
            paths.append(p)
        for t, (header, rows) in sorted(self.tables.items()):
            p = out / f"{stem}_{t}.csv"
            p.write_text(self._csv(header, rows))
            paths.append(p)
        sidecar = out / f"{stem}.timing.json"
        sidecar.write_text(json.dumps({
            "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_clock_seconds": round(time.perf_counter() - self._t0, 3)}, indent=2) + "\n")
        return paths + [sidecar]
