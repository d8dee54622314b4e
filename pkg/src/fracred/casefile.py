"""Case-file schema: the single self-describing JSON input of a case.

A case file references fragment meshes by relative path and stores picked
landmarks and labeled fracture lines as raw 3D point lists (not mesh-vertex
indices), so the labels survive remeshing. Units are always millimeters and
the file says so explicitly. See docs/file_formats.md for the schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DanglingReference,
    FracredError,
    IoError,
    SchemaError,
    UnitsMismatch,
)
from .geometry import Mesh, RigidTransform
from .meshio import load_mesh, save_mesh
from .metrics import FractureLinePair, MetricParams
from .spherefit import LandmarkSet

SCHEMA_VERSION = 1
_SIDES = ("left", "right")
_PARAM_KEYS = ("arc_step", "target_edge", "step_off_mode")


@dataclass(frozen=True)
class Fragment:
    """One segmented fragment: id, mesh, optional manual seed transform."""

    fragment_id: str
    mesh_path: Path
    mesh: Mesh
    seed_transform: RigidTransform | None = None


@dataclass(frozen=True)
class FractureCase:
    """Fully validated case: fragments, landmarks, line pairs, parameters."""

    case_id: str
    side: str
    fragments: tuple[Fragment, ...]
    landmark_sets: tuple[LandmarkSet, ...]
    pairs: tuple[FractureLinePair, ...]
    params: MetricParams
    path: Path | None = None

    def landmark_points(self) -> np.ndarray:
        return np.vstack([ls.points for ls in self.landmark_sets])

    def line_pairs(self) -> list[FractureLinePair]:
        return list(self.pairs)

    def metric_params(self) -> MetricParams:
        return self.params

    def fragment(self, fragment_id: str) -> Fragment:
        for frag in self.fragments:
            if frag.fragment_id == fragment_id:
                return frag
        raise DanglingReference(f"unknown fragment id {fragment_id!r}")

    def input_digest(self) -> str:
        """SHA-256 over the canonical case JSON plus all mesh file bytes."""
        h = hashlib.sha256()
        payload = {
            "case_id": self.case_id,
            "side": self.side,
            "fragments": [f.fragment_id for f in self.fragments],
            "landmark_sets": [
                {"label": ls.label, "points": ls.points.tolist()}
                for ls in self.landmark_sets
            ],
            "pairs": [
                {
                    "pair_id": p.pair_id,
                    "fragment_a": p.fragment_a,
                    "fragment_b": p.fragment_b,
                    "line_a": p.line_a.tolist(),
                    "line_b": p.line_b.tolist(),
                }
                for p in self.pairs
            ],
        }
        h.update(json.dumps(payload, sort_keys=True).encode())
        for frag in self.fragments:
            h.update(frag.mesh_path.read_bytes())
        return h.hexdigest()


def _expect(mapping, key, kind, path, optional=False, default=None):
    if key not in mapping:
        if optional:
            return default
        raise SchemaError(f"{path}.{key}", "required field is missing")
    value = mapping[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind):
        raise SchemaError(
            f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _point_list(value, path, min_len):
    if not isinstance(value, list) or len(value) < min_len:
        raise SchemaError(path, f"expected a list of at least {min_len} [x, y, z] points")
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(path, "points must be numeric [x, y, z] triples") from None
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise SchemaError(path, f"points must be [x, y, z] triples, got shape {arr.shape}")
    return arr


def load_case(path) -> FractureCase:
    """Load and fully validate a case file.

    Relative mesh paths resolve against the case file's directory. Errors
    carry the offending field path; referencing an undefined fragment raises
    DanglingReference and any units other than "mm" raise UnitsMismatch.
    """
    p = Path(path)
    if not p.is_file():
        raise IoError(f"case file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read case file {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("$", "top level must be a JSON object")

    version = _expect(raw, "schema_version", int, "$")
    if version != SCHEMA_VERSION:
        raise SchemaError("$.schema_version", f"unsupported version {version}")
    units = _expect(raw, "units", str, "$")
    if units != "mm":
        raise UnitsMismatch(f"units must be 'mm', got {units!r}")
    case_id = _expect(raw, "case_id", str, "$")
    side = _expect(raw, "side", str, "$")
    if side not in _SIDES:
        raise SchemaError("$.side", f"must be one of {_SIDES}, got {side!r}")

    fragments = []
    frag_entries = _expect(raw, "fragments", list, "$")
    seen = set()
    for i, entry in enumerate(frag_entries):
        fp = f"$.fragments[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(fp, "must be an object")
        frag_id = _expect(entry, "id", str, fp)
        if frag_id in seen:
            raise SchemaError(f"{fp}.id", f"duplicate fragment id {frag_id!r}")
        seen.add(frag_id)
        mesh_rel = _expect(entry, "mesh_path", str, fp)
        mesh_path = (p.parent / mesh_rel).resolve()
        mesh = load_mesh(mesh_path)
        seed = None
        if "seed_transform" in entry:
            matrix = entry["seed_transform"]
            try:
                seed = RigidTransform.from_matrix(np.asarray(matrix, dtype=np.float64))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{fp}.seed_transform", str(exc)) from None
        fragments.append(Fragment(frag_id, mesh_path, mesh, seed))

    landmark_sets = []
    for i, entry in enumerate(_expect(raw, "landmark_sets", list, "$")):
        lp = f"$.landmark_sets[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(lp, "must be an object")
        label = _expect(entry, "label", str, lp)
        provenance = _expect(entry, "provenance", str, lp, optional=True, default="")
        pts = _point_list(entry.get("points"), f"{lp}.points", 4)
        try:
            landmark_sets.append(LandmarkSet(pts, label=label, provenance=provenance))
        except (FracredError, ValueError) as exc:
            raise SchemaError(f"{lp}.points", str(exc)) from None
    if not landmark_sets:
        raise SchemaError("$.landmark_sets", "at least one landmark set is required")

    pairs = []
    for i, entry in enumerate(raw.get("fracture_line_pairs", [])):
        pp = f"$.fracture_line_pairs[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(pp, "must be an object")
        pair_id = _expect(entry, "pair_id", str, pp, optional=True, default=f"pair-{i}")
        frag_a = _expect(entry, "fragment_a", str, pp)
        frag_b = _expect(entry, "fragment_b", str, pp)
        for ref in (frag_a, frag_b):
            if ref not in seen:
                raise DanglingReference(
                    f"{pp} references unknown fragment id {ref!r}"
                )
        line_a = _point_list(entry.get("line_a"), f"{pp}.line_a", 2)
        line_b = _point_list(entry.get("line_b"), f"{pp}.line_b", 2)
        try:
            pairs.append(FractureLinePair(line_a, line_b, frag_a, frag_b, pair_id))
        except ValueError as exc:
            raise SchemaError(pp, str(exc)) from None

    params_raw = raw.get("params", {})
    if not isinstance(params_raw, dict):
        raise SchemaError("$.params", "must be an object")
    for key in params_raw:
        if key not in _PARAM_KEYS:
            raise SchemaError(f"$.params.{key}", f"unknown parameter (known: {_PARAM_KEYS})")
    try:
        params = MetricParams(**params_raw)
    except (TypeError, ValueError) as exc:
        raise SchemaError("$.params", str(exc)) from None

    return FractureCase(
        case_id=case_id,
        side=side,
        fragments=tuple(fragments),
        landmark_sets=tuple(landmark_sets),
        pairs=tuple(pairs),
        params=params,
        path=p,
    )


def save_case_dir(
    outdir,
    case_id: str,
    fragments,
    landmark_sets,
    pairs,
    side: str = "left",
    params: MetricParams | None = None,
) -> Path:
    """Write meshes plus case.json into ``outdir`` and return the case path.

    ``fragments`` is an iterable of (fragment_id, Mesh); ``landmark_sets``
    of (label, provenance, points); ``pairs`` of FractureLinePair.
    """
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create case directory {out}: {exc}") from exc
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "case_id": case_id,
        "side": side,
        "units": "mm",
        "fragments": [],
        "landmark_sets": [],
        "fracture_line_pairs": [],
    }
    for frag_id, mesh in fragments:
        mesh_name = f"{frag_id}.ply"
        save_mesh(mesh, out / mesh_name)
        doc["fragments"].append({"id": frag_id, "mesh_path": mesh_name})
    for label, provenance, points in landmark_sets:
        doc["landmark_sets"].append(
            {
                "label": label,
                "provenance": provenance,
                "points": np.asarray(points, dtype=np.float64).tolist(),
            }
        )
    for pair in pairs:
        doc["fracture_line_pairs"].append(
            {
                "pair_id": pair.pair_id,
                "fragment_a": pair.fragment_a,
                "fragment_b": pair.fragment_b,
                "line_a": pair.line_a.tolist(),
                "line_b": pair.line_b.tolist(),
            }
        )
    if params is not None:
        doc["params"] = {
            "arc_step": params.arc_step,
            "target_edge": params.target_edge,
            "step_off_mode": params.step_off_mode,
        }
    case_path = out / "case.json"
    try:
        case_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write case file {case_path}: {exc}") from exc
    return case_path
