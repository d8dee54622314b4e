"""Command-line interface.

Subcommands tie the library into user-runnable workflows:

    chamfer A B          segmentation QC between two meshes
    fit-sphere CASE      articular sphere fit from case landmarks
    metrics CASE         3D gap / step-off / total gap area report
    register CASE RED    per-fragment rigid transform recovery
    synth PRESET OUT     synthetic case with analytic ground truth
    batch LIST OUT       metrics over a case list, optionally in parallel

Exit codes: 0 success, 1 validation error, 2 computation error. All
diagnostics go to stderr; results go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .casefile import FractureCase, load_case, save_case_dir
from .chamfer import chamfer_distance, mesh_vertex_set
from .errors import ComputationError, FracredError, ValidationError
from .meshio import load_mesh
from .metrics import MetricParams, case_metrics
from .registration import (
    TRANSFORM_CONVENTION,
    FragmentMatch,
    recover_fragment_transforms,
)
from .report import build_report, write_report
from .spherefit import fit_sphere
from .synthbench import PRESETS, make_preset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracred",
        description="Quantify bone-fracture reduction quality from segmented"
        " fragment meshes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    chamfer = sub.add_parser("chamfer", help="Chamfer distance between two meshes.")
    chamfer.add_argument("mesh_a", metavar="A")
    chamfer.add_argument("mesh_b", metavar="B")
    chamfer.add_argument(
        "--sampling", choices=["vertices", "area"], default="vertices",
        help="point cloud source: mesh vertices (default) or area-weighted samples",
    )
    chamfer.add_argument("--samples", type=int, default=10000,
                         help="sample count for --sampling area")
    chamfer.add_argument("--seed", type=int, default=0)

    fit = sub.add_parser("fit-sphere", help="Fit the articular sphere of a case.")
    fit.add_argument("case", metavar="CASE")
    fit.add_argument("--label", default=None,
                     help="use only the landmark set with this label")

    metrics = sub.add_parser("metrics", help="Compute 3D gap, step-off and gap area.")
    metrics.add_argument("case", metavar="CASE")
    metrics.add_argument("--arc-step", type=float, default=None, metavar="MM")
    metrics.add_argument("--target-edge", type=float, default=None, metavar="MM")
    metrics.add_argument("--step-off-mode", choices=["absolute", "differential"],
                         default=None)
    metrics.add_argument("-o", "--outdir", default=None, metavar="DIR",
                         help="write report.json/report.csv here")

    register = sub.add_parser("register", help="Recover per-fragment rigid transforms.")
    register.add_argument("case", metavar="CASE")
    register.add_argument("reduced_case", metavar="REDUCED_CASE")
    register.add_argument("--trim-fraction", type=float, default=0.9)
    register.add_argument("-o", "--outdir", default=None, metavar="DIR")

    synth = sub.add_parser("synth", help="Generate a synthetic case with ground truth.")
    synth.add_argument("preset", metavar="PRESET",
                       help="one of: " + ", ".join(sorted(PRESETS)))
    synth.add_argument("outdir", metavar="OUTDIR")
    synth.add_argument("--seed", type=int, default=0)

    batch = sub.add_parser("batch", help="Run metrics over every case in a list file.")
    batch.add_argument("caselist", metavar="CASELIST",
                       help="text file, one case path per line, '#' comments")
    batch.add_argument("outdir", metavar="OUTDIR")
    batch.add_argument("--jobs", type=int, default=1, metavar="N")
    batch.add_argument("--arc-step", type=float, default=None, metavar="MM")
    batch.add_argument("--target-edge", type=float, default=None, metavar="MM")
    batch.add_argument("--step-off-mode", choices=["absolute", "differential"],
                       default=None)
    return parser


def _resolved_params(case: FractureCase, args) -> MetricParams:
    base = case.metric_params()
    return MetricParams(
        arc_step=args.arc_step if args.arc_step is not None else base.arc_step,
        target_edge=(
            args.target_edge if args.target_edge is not None else base.target_edge
        ),
        step_off_mode=(
            args.step_off_mode if args.step_off_mode is not None else base.step_off_mode
        ),
    )


def _cmd_chamfer(args) -> int:
    mesh_a = load_mesh(args.mesh_a)
    mesh_b = load_mesh(args.mesh_b)
    kwargs = {}
    if args.sampling == "area":
        kwargs = {"n": args.samples, "seed": args.seed}
    a = mesh_vertex_set(mesh_a, args.sampling, **kwargs)
    b = mesh_vertex_set(mesh_b, args.sampling, **kwargs)
    print(chamfer_distance(a, b))
    return 0


def _cmd_fit_sphere(args) -> int:
    case = load_case(args.case)
    if args.label is None:
        points = case.landmark_points()
    else:
        sets = [ls for ls in case.landmark_sets if ls.label == args.label]
        if not sets:
            known = ", ".join(ls.label for ls in case.landmark_sets)
            raise ValidationError(
                f"no landmark set labeled {args.label!r} (available: {known})"
            )
        points = np.vstack([ls.points for ls in sets])
    sphere = fit_sphere(points)
    print(
        json.dumps(
            {
                "case_id": case.case_id,
                "center_mm": sphere.center.tolist(),
                "radius_mm": sphere.radius,
                "rms_residual_mm": sphere.rms_residual,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _cmd_metrics(args) -> int:
    case = load_case(args.case)
    params = _resolved_params(case, args)
    report = case_metrics(case, params)
    doc = build_report(case, report)
    if args.outdir:
        paths = write_report(doc, args.outdir)
        print(f"report: {paths['report']}")
        print(f"csv: {paths['csv']}")
    agg = doc["aggregates"]
    print(f"case {case.case_id}: total_gap_area_mm2={agg['total_gap_area_mm2']}"
          f" gap_3d_mm={agg['gap_3d_mm']} step_off_3d_mm={agg['step_off_3d_mm']}"
          f" complete={agg['complete']}")
    for note in doc["warnings"]:
        print(f"warning: {note}", file=sys.stderr)
    return 0


def _cmd_register(args) -> int:
    original = load_case(args.case)
    reduced = load_case(args.reduced_case)
    reduced_ids = {f.fragment_id for f in reduced.fragments}
    matches = []
    seeds = {}
    for frag in original.fragments:
        if frag.fragment_id not in reduced_ids:
            raise ValidationError(
                f"fragment {frag.fragment_id!r} missing from the reduced case"
            )
        counterpart = reduced.fragment(frag.fragment_id)
        matches.append(FragmentMatch(frag.mesh, counterpart.mesh, frag.fragment_id))
        seed = counterpart.seed_transform or frag.seed_transform
        if seed is not None:
            seeds[frag.fragment_id] = seed
    results = recover_fragment_transforms(
        matches, trim_fraction=args.trim_fraction, seeds=seeds
    )
    doc = {
        "tool_version": __version__,
        "case_id": original.case_id,
        "reduced_case_id": reduced.case_id,
        "transform_convention": TRANSFORM_CONVENTION,
        "fragments": [
            {
                "fragment_id": r.fragment_id,
                "matrix_4x4_row_major": None if r.failed else r.transform.matrix.tolist(),
                "rms_mm": None if r.failed else r.rms,
                "inlier_fraction": r.inlier_fraction,
                "iterations": r.iterations,
                "converged": r.converged,
                "error": r.error,
            }
            for r in results
        ],
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.outdir:
        out = Path(args.outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "registration.json").write_text(text + "\n")
        print(f"registration: {out / 'registration.json'}")
    else:
        print(text)
    for r in results:
        if r.failed:
            print(f"warning: fragment {r.fragment_id!r} failed: {r.error}",
                  file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    case = make_preset(args.preset, seed=args.seed)
    out = Path(args.outdir)
    case_path = save_case_dir(
        out,
        case.case_id,
        zip(case.fragment_ids, case.fragments),
        [("articular-sphere", f"synthbench seed={case.seed}", pts)
         for pts in case.landmarks],
        case.pairs,
    )
    truth = case.ground_truth
    truth_doc = {
        "gap_3d_mm": truth.gap_3d,
        "step_off_3d_mm": truth.step_off_3d,
        "total_gap_area_mm2": truth.total_gap_area,
        "sphere": {"center_mm": [0.0, 0.0, 0.0], "radius_mm": case.radius},
        "transform_convention": TRANSFORM_CONVENTION,
        "transforms": {
            frag_id: t.matrix.tolist()
            for frag_id, t in zip(case.fragment_ids, truth.transforms)
        },
        "seed": case.seed,
    }
    (out / "ground_truth.json").write_text(
        json.dumps(truth_doc, indent=2, sort_keys=True) + "\n"
    )
    print(f"case: {case_path}")
    print(f"ground truth: {out / 'ground_truth.json'}")
    return 0


def _run_one_case(case_path: str, outdir: Path, args):
    case = load_case(case_path)
    params = _resolved_params(case, args)
    report = case_metrics(case, params)
    doc = build_report(case, report)
    paths = write_report(doc, outdir / case.case_id)
    return case.case_id, paths["report"]


def _cmd_batch(args) -> int:
    list_path = Path(args.caselist)
    if not list_path.is_file():
        raise ValidationError(f"case list not found: {list_path}")
    entries = [
        line.strip()
        for line in list_path.read_text().splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = max(1, args.jobs)

    def worker(entry: str):
        try:
            case_id, report_path = _run_one_case(entry, outdir, args)
            return {"case": entry, "case_id": case_id, "status": "ok",
                    "report": str(report_path), "error": None}
        except FracredError as exc:
            return {"case": entry, "case_id": None, "status": "failed",
                    "report": None, "error": str(exc)}

    if jobs == 1:
        rows = [worker(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(worker, entries))

    summary_path = outdir / "batch_summary.json"
    summary_path.write_text(
        json.dumps({"cases": rows}, indent=2, sort_keys=True) + "\n"
    )
    n_failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"batch: {len(rows) - n_failed}/{len(rows)} cases succeeded")
    print(f"summary: {summary_path}")
    for r in rows:
        if r["status"] != "ok":
            print(f"failed: {r['case']}: {r['error']}", file=sys.stderr)
    return 1 if n_failed else 0


_COMMANDS = {
    "chamfer": _cmd_chamfer,
    "fit-sphere": _cmd_fit_sphere,
    "metrics": _cmd_metrics,
    "register": _cmd_register,
    "synth": _cmd_synth,
    "batch": _cmd_batch,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ComputationError as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
