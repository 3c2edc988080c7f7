"""Experiment reports: deterministic payload plus a separate runtime block."""

import csv
import json
import math
import os
from dataclasses import dataclass, field

from .config import canonical_json

Z_FAIL = 4.0
P_FAIL = 0.01
MIN_REPLICAS_FOR_Z = 100


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_clean(u) for u in v]
    if isinstance(v, dict):
        return {k: _clean(u) for k, u in v.items()}
    if hasattr(v, "item"):
        return _clean(v.item())
    return v


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    config_hash: str
    queries: list = field(default_factory=list)
    statistics: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)

    def add_query(self, **row):
        n = row.get("replicas")
        if row.get("z") is not None and n is not None and 0 < n < MIN_REPLICAS_FOR_Z:
            raise ValueError("z-scores need at least 100 replicas")
        self.queries.append(row)

    def payload(self):
        """Everything except timing; identical config and seed give identical bytes."""
        return _clean({
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": self.config_hash,
            "queries": self.queries,
            "statistics": self.statistics,
            "warnings": self.warnings,
        })

    def to_dict(self):
        d = self.payload()
        d["runtime"] = _clean(self.runtime)
        return d

    def failed(self):
        for q in self.queries:
            z = q.get("z")
            if z is not None and abs(z) > Z_FAIL:
                return True
        for s in self.statistics:
            p = s.get("p_value")
            if p is not None and p < P_FAIL:
                return True
        return False

    @property
    def exit_code(self):
        return 1 if self.failed() else 0

    def write(self, out_dir, stem=None):
        stem = stem or self.experiment.replace("-", "_")
        try:
            os.makedirs(out_dir, exist_ok=True)
            jpath = os.path.join(out_dir, f"{stem}.json")
            with open(jpath, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")
            paths = [jpath]
            if self.queries:
                paths.append(write_csv(os.path.join(out_dir, f"{stem}.csv"), self.queries))
        except OSError as e:
            raise OSError(f"writing report to {out_dir}: {e}") from e
        return paths

    def payload_bytes(self):
        return canonical_json(self.payload()).encode()


def _cell(v):
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(u) for u in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_csv(path, rows, columns=None):
    """RFC-4180 CSV with a header row; list cells are space separated."""
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_cell(r.get(k)) for k in columns])
    except OSError as e:
        raise OSError(f"writing {path}: {e}") from e
    return path
