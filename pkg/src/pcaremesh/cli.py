"""Command-line interface: ``pcaremesh remesh | evaluate | generate-shape``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import plotting
from .mesh_core import MeshError, cluster_colors, load_mesh, write_mesh
from .metrics import aspect_ratio_error, build_report, dump_report, interior_clusters, \
    one_sided_error, size_distribution
from .moments import ENERGY_MODES
from .pipeline import OUTPUT_MODES, RunConfig, run_pipeline
from .shapes import KINDS, AnalyticSurface, add_normal_noise

logger = logging.getLogger("pcaremesh")


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key] = float(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcaremesh", description=__doc__,
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentDefaultsHelpFormatter
    r = sub.add_parser("remesh", help="partition a mesh and build the remeshed output",
                       formatter_class=fmt)
    r.add_argument("input", help="input OBJ or PLY triangle mesh")
    r.add_argument("--clusters", "-n", type=int, required=True, help="number of clusters")
    r.add_argument("--mode", choices=OUTPUT_MODES, default="partition")
    budget = r.add_mutually_exclusive_group()
    budget.add_argument("--target-vertices", type=int, help="vertex budget for simplification")
    budget.add_argument("--target-faces", type=int, help="face budget for simplification")
    r.add_argument("--energy", choices=ENERGY_MODES, default="pca")
    r.add_argument("--threshold", type=float, default=1e-12,
                   help="degeneracy threshold on det/area^5 (normalized mesh)")
    r.add_argument("--alpha", type=float, default=1e-4, help="quality coefficient for flat clusters")
    r.add_argument("--swap-epsilon", type=float, default=None,
                   help="minimum accepted energy decrease (default: 1e-14 x initial energy)")
    r.add_argument("--max-swap-iterations", type=int, default=1000)
    r.add_argument("--seed", type=int, default=0, help="recorded in the report; the pipeline is deterministic")
    r.add_argument("--out-dir", default=".", help="directory for all artifacts")
    r.add_argument("--report", default=None, help="JSON report path (default: <out-dir>/<stem>_report.json)")
    r.add_argument("--surface", choices=KINDS, default=None,
                   help="analytic surface the input samples, enables aspect-ratio and size statistics")
    r.add_argument("--surface-param", action="append", metavar="KEY=VALUE")
    r.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    r.add_argument("--threads", type=int, default=1,
                   help="cap on parallel sections (every stage currently runs single-threaded)")

    e = sub.add_parser("evaluate", help="one-sided error of a result mesh against an original",
                       formatter_class=fmt)
    e.add_argument("original")
    e.add_argument("result")
    e.add_argument("--report", default=None, help="JSON output path (default: stdout only)")

    g = sub.add_parser("generate-shape", help="tessellate an analytic test surface",
                       formatter_class=fmt)
    g.add_argument("kind", choices=KINDS)
    g.add_argument("output")
    g.add_argument("--resolution", type=int, default=65,
                   help="grid side (plane, paraboloid, cylinder), quads per cube side, "
                        "or subdivision level (sphere, ellipsoid)")
    g.add_argument("--param", action="append", metavar="KEY=VALUE")
    g.add_argument("--noise", type=float, default=0.0, help="normal noise variance over bbox diagonal")
    g.add_argument("--seed", type=int, default=0)
    return parser


def cmd_remesh(args) -> int:
    config = RunConfig(args.clusters, args.mode, args.target_vertices, args.target_faces,
                       args.energy, args.threshold, args.alpha, args.swap_epsilon,
                       args.max_swap_iterations, args.seed)
    surface = AnalyticSurface(args.surface, _parse_params(args.surface_param)) if args.surface else None
    mesh = load_mesh(args.input)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.input))[0]

    res = run_pipeline(mesh, config)
    part = res.partition
    out = {"clusters": part.n_clusters}
    part_path = os.path.join(args.out_dir, f"{stem}_partition.ply")
    write_mesh(mesh, part_path, colors=cluster_colors(part.labels))
    artifacts = [part_path]
    approx = None
    if res.polygonal is not None:
        path = os.path.join(args.out_dir, f"{stem}_polygonal.obj")
        write_mesh(res.polygonal, path)
        artifacts.append(path)
        out.update(vertices=len(res.polygonal.vertices), polygons=res.polygonal.n_polygons)
    if config.mode == "triangular":
        final = res.final_mesh
        path = os.path.join(args.out_dir, f"{stem}_remeshed.obj")
        write_mesh(final, path)
        artifacts.append(path)
        out.update(vertices=final.n_vertices, faces=final.n_faces)
        if res.simplified is not None and not res.simplified.reached_target:
            print(f"warning: simplification stopped at {final.n_vertices} vertices / "
                  f"{final.n_faces} faces", file=sys.stderr)
    if res.final_mesh is not None:
        approx = one_sided_error(mesh, res.final_mesh)

    dr = size = None
    if surface is not None:
        dr = aspect_ratio_error(part, surface, res.scale, res.center)
        inner = interior_clusters(part, res.adjacency)
        size = size_distribution(part, surface, res.scale, res.center, inner)

    extra = {
        "swap": {"passes": res.swap.iterations, "swaps": res.swap.n_swaps,
                 "converged": res.swap.converged},
        "cleaning": {"pieces_before": res.pieces_before_clean, "repairs": res.clean_report.repairs,
                     "faces_moved": res.clean_report.faces_moved},
        "diagnostics": list(res.polygonal.diagnostics) if res.polygonal else [],
    }
    if surface is not None:
        extra["surface"] = {"kind": surface.kind, "params": surface.params}
        finite = dr.dr[np.isfinite(dr.dr)]
        extra["median_abs_dr"] = float(np.median(np.abs(finite))) if len(finite) else None
    report = build_report(mesh, out, res.energy_trace, approx, dr, size, res.timings_ms,
                          config.to_dict(), extra)
    report_path = args.report or os.path.join(args.out_dir, f"{stem}_report.json")
    dump_report(report, report_path)
    artifacts.append(report_path)
    if not args.no_figures:
        artifacts += plotting.write_figures(os.path.dirname(report_path) or ".", stem,
                                            res.energy_trace,
                                            approx.distances if approx else None, dr)
    for a in artifacts:
        print(a)
    return 0


def cmd_evaluate(args) -> int:
    original = load_mesh(args.original)
    result = load_mesh(args.result)
    approx = one_sided_error(original, result)
    if args.report:
        report = build_report(original, {"vertices": result.n_vertices, "faces": result.n_faces},
                              [], approx, None, None, {})
        dump_report(report, args.report)
    print(f"mean_error {approx.mean_error:.9g}")
    print(f"max_error {approx.max_error:.9g}")
    return 0


def cmd_generate_shape(args) -> int:
    if args.noise < 0:
        raise ValueError("noise must be non-negative")
    surface = AnalyticSurface(args.kind, _parse_params(args.param))
    mesh = surface.tessellate(args.resolution)
    if args.noise > 0:
        mesh = add_normal_noise(mesh, args.noise, args.seed, surface)
    write_mesh(mesh, args.output)
    print(f"{args.output}: {mesh.n_vertices} vertices, {mesh.n_faces} faces")
    return 0


COMMANDS = {"remesh": cmd_remesh, "evaluate": cmd_evaluate, "generate-shape": cmd_generate_shape}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (MeshError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
