"""
CSV and manifest writers.

Every table is written through pandas with a header row, no index and
round-trip float formatting, so identical runs produce identical bytes.
"""

import json
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List

import numpy as np
import pandas as pd
import pydantic
import scipy
import yaml

from . import __version__
from .schemas import ExperimentConfig
from .verification import CheckResult
from .wiener import PathEnsemble

SUMMARY_COLUMNS = ["name", "statistic", "tolerance", "passed"]
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "manifest.json"

_FLOAT_FORMAT = "%.17g"


def write_frame(frame: pd.DataFrame, output_path: Path) -> None:
    """Write one CSV table, creating parent directories."""
    output_path = Path(output_path)
    output_path.parent.mkdir(exist_ok=True, parents=True)
    frame.to_csv(output_path, index=False, float_format=_FLOAT_FORMAT, lineterminator="\n")


def check_slug(name: str) -> str:
    """File stem for a check label: `uniqueness[sin-of-w]` -> `uniqueness_sin-of-w`."""
    return re.sub(r"[^A-Za-z0-9.-]+", "_", name).strip("_")


def save_check(result: CheckResult, output_dir: Path) -> List[Path]:
    """Diagnostics, convergence report and trace of one check."""
    output_dir = Path(output_dir)
    stem = check_slug(result.name)
    written = []
    tables = [(f"{stem}.csv", result.diagnostics_frame())]
    if result.report is not None:
        tables.append((f"{stem}_report.csv", result.report.to_frame()))
    if result.trace is not None:
        tables.append((f"{stem}_trace.csv", result.trace.to_frame()))
    for filename, frame in tables:
        write_frame(frame, output_dir / filename)
        written.append(output_dir / filename)
    return written


def start_summary(output_dir: Path) -> Path:
    """Truncate the summary to its header row."""
    path = Path(output_dir) / SUMMARY_FILE
    write_frame(pd.DataFrame(columns=SUMMARY_COLUMNS), path)
    return path


def append_summary(result: CheckResult, output_dir: Path) -> None:
    """One verdict line per finished check."""
    path = Path(output_dir) / SUMMARY_FILE
    frame = pd.DataFrame([result.summary_row()], columns=SUMMARY_COLUMNS)
    frame.to_csv(path, mode="a", header=False, index=False, float_format=_FLOAT_FORMAT, lineterminator="\n")


def path_frame(ensemble: PathEnsemble, index: int) -> pd.DataFrame:
    path = ensemble.path(index)
    return pd.DataFrame({"t": path.grid.knots, "w": path.values})


def save_paths(ensemble: PathEnsemble, count: int, output_dir: Path) -> List[Path]:
    """`t,w` tables for the first `count` paths, one file each."""
    written = []
    for i in range(min(count, ensemble.count)):
        path = Path(output_dir) / f"path_{i:05d}.csv"
        write_frame(path_frame(ensemble, i), path)
        written.append(path)
    return written


def versions() -> Dict[str, str]:
    return {
        "itoint": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "pyyaml": yaml.__version__,
    }


def build_manifest(config: ExperimentConfig, results: Iterable[CheckResult]) -> Dict[str, Any]:
    """Config echo, library versions and verdicts. No timestamps."""
    results = list(results)
    return {
        "master_seed": config.master_seed,
        "config": config.model_dump(mode="json"),
        "versions": versions(),
        "checks": [result.summary_row() for result in results],
        "passed": all(result.passed for result in results),
        "note": "verdicts are finite-sample Monte Carlo evidence, not proofs",
    }


def write_manifest(config: ExperimentConfig, results: Iterable[CheckResult], output_dir: Path) -> Path:
    path = Path(output_dir) / MANIFEST_FILE
    path.parent.mkdir(exist_ok=True, parents=True)
    with open(path, "w") as f:
        json.dump(build_manifest(config, results), f, indent=2, sort_keys=True)
        f.write("\n")
    return path
