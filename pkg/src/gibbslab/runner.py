"""Execute a scenario and write its artifact directory."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__
from .config import ExperimentConfig
from .scenarios import Check, Outcome, get


def format_cell(value) -> str:
    """Deterministic text for a CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def verdict_lines(checks: list[Check]) -> list[str]:
    """One machine-readable line per acceptance criterion covered."""
    lines = []
    for crit in sorted({c.criterion for c in checks}):
        mine = [c for c in checks if c.criterion == crit]
        status = "PASS" if all(c.passed for c in mine) else "FAIL"
        failed = ",".join(c.name for c in mine if not c.passed) or "-"
        lines.append(f"criterion=C{crit} status={status} checks={len(mine)} failed={failed}")
    return lines


@dataclass
class RunResult:
    scenario: str
    out_dir: Path
    outcome: Outcome
    seconds: float

    @property
    def passed(self) -> bool:
        return self.outcome.passed

    def verdicts(self) -> list[str]:
        return verdict_lines(self.outcome.checks)


def run(cfg: ExperimentConfig, out_dir: str | Path) -> RunResult:
    scenario = get(cfg.scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    outcome = scenario.run(cfg)
    seconds = time.perf_counter() - t0

    files = {}
    for name, table in outcome.tables.items():
        path = out / f"{name}.csv"
        write_csv(path, table.header, table.rows)
        files[path.name] = _sha256(path)
    checks_path = out / "checks.csv"
    write_csv(checks_path, ["criterion", "check", "value", "target", "status"],
              [(f"C{c.criterion}", c.name, c.value, c.target, "PASS" if c.passed else "FAIL")
               for c in outcome.checks])
    files[checks_path.name] = _sha256(checks_path)
    lines = verdict_lines(outcome.checks)
    (out / "verdicts.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {
        "scenario": cfg.scenario,
        "criteria": [f"C{c}" for c in scenario.criteria],
        "config": cfg.canonical(),
        "config_sha256": cfg.digest(),
        "versions": {"gibbslab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "pydantic": pydantic.VERSION},
        "wall_seconds": round(seconds, 3),
        "passed": outcome.passed,
        "summary": {k: (format_cell(v) if not isinstance(v, str) else v)
                    for k, v in sorted(outcome.summary.items())},
        "files": dict(sorted(files.items())),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return RunResult(cfg.scenario, out, outcome, seconds)
