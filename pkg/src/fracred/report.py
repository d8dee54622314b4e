"""Report assembly and deterministic on-disk emission.

The primary report is a canonical JSON document: identical inputs and
parameters produce byte-identical bytes, so operator comparisons and batch
reruns are auditable by hash. Timestamps live in a separate .meta.json
sidecar to keep the primary file reproducible. A flat CSV (one row per
fracture-line pair) accompanies every report for spreadsheet aggregation
across operators.
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

from . import __version__
from .casefile import FractureCase
from .errors import IoError
from .metrics import METRIC_CONVENTIONS, ReductionReport
from .registration import TRANSFORM_CONVENTION, RegistrationResult

REPORT_SCHEMA_VERSION = 1

CSV_COLUMNS = ("case_id", "pair_id", "gap_3d_mm", "step_off_3d_mm", "gap_area_mm2")


def _num(x):
    """JSON-safe float: NaN/inf become null."""
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def build_report(
    case: FractureCase,
    report: ReductionReport,
    registration: list[RegistrationResult] | None = None,
) -> dict:
    """Assemble the full report document for one case."""
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "case_id": case.case_id,
        "side": case.side,
        "units": "mm",
        "input_digest": case.input_digest(),
        "parameters": {
            "arc_step_mm": report.params.arc_step,
            "target_edge_mm": report.params.target_edge,
            "step_off_mode": report.params.step_off_mode,
        },
        "conventions": dict(METRIC_CONVENTIONS),
        "sphere_fit": {
            "center_mm": [float(c) for c in report.sphere.center],
            "radius_mm": float(report.sphere.radius),
            "rms_residual_mm": float(report.sphere.rms_residual),
        },
        "per_pair": [
            {
                "pair_id": row.pair_id,
                "fragment_a": row.fragment_a,
                "fragment_b": row.fragment_b,
                "gap_3d_mm": _num(row.gap_3d),
                "step_off_3d_mm": _num(row.step_off_3d),
                "gap_area_mm2": _num(row.gap_area),
                "warnings": list(row.warnings),
                "error": row.error,
            }
            for row in report.per_pair
        ],
        "aggregates": {
            "total_gap_area_mm2": _num(report.total_gap_area),
            "gap_3d_mm": _num(report.gap_3d),
            "step_off_3d_mm": _num(report.step_off_3d),
            "complete": report.complete,
        },
        "warnings": list(report.warnings),
    }
    if registration is not None:
        doc["registration"] = {
            "transform_convention": TRANSFORM_CONVENTION,
            "fragments": [
                {
                    "fragment_id": r.fragment_id,
                    "matrix_4x4_row_major": (
                        None if r.failed else r.transform.matrix.tolist()
                    ),
                    "rms_mm": _num(r.rms),
                    "inlier_fraction": _num(r.inlier_fraction),
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "error": r.error,
                }
                for r in registration
            ],
        }
    return doc


def write_report(doc: dict, outdir) -> dict[str, Path]:
    """Write report.json, report.csv and the timestamp sidecar.

    Returns the written paths. The primary JSON and the CSV are byte-stable
    for identical inputs; only the sidecar carries wall-clock time.
    """
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create report directory {out}: {exc}") from exc
    if not out.is_dir():
        raise IoError(f"not a directory: {out}")

    report_path = out / "report.json"
    csv_path = out / "report.csv"
    meta_path = out / "report.meta.json"
    try:
        report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in doc.get("per_pair", []):
                writer.writerow(
                    [
                        doc["case_id"],
                        row["pair_id"],
                        _csv_num(row["gap_3d_mm"]),
                        _csv_num(row["step_off_3d_mm"]),
                        _csv_num(row["gap_area_mm2"]),
                    ]
                )
        meta_path.write_text(
            json.dumps({"written_at_unix": time.time()}, sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise IoError(f"cannot write report files under {out}: {exc}") from exc
    return {"report": report_path, "csv": csv_path, "meta": meta_path}


def _csv_num(x) -> str:
    return "" if x is None else repr(float(x))
