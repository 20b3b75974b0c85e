"""Batch command-line interface.

Verbs: ``mesh`` (generate or inspect), ``simulate`` (forward model plus
noise), ``reconstruct`` (single run), ``experiment`` (full matrix), and
``metrics`` (re-score a saved field). Everything is driven by the same
experiment configuration file documented in the README; nothing is
interactive.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from .forward import add_noise, boundary_data_from_csv, boundary_data_to_csv
from .mesh import load_mesh, save_mesh, save_vtk
from .metrics import evaluate_reconstruction
from .phantoms import make_circle_mesh, make_layered_disk
from .reconstruct import reconstruct


def _cmd_mesh(args) -> int:
    if args.action == "circle":
        mesh = make_circle_mesh(args.radius, args.target_area)
    elif args.action == "layered":
        mesh, _ = make_layered_disk(target_element_area=args.target_area)
    else:
        mesh = load_mesh(args.action)
        print(
            f"{args.action}: dim={mesh.dim} nodes={mesh.n_nodes} "
            f"elements={mesh.n_elements} boundary={int(mesh.boundary_node.sum())}"
        )
        if not (args.output or args.vtk):
            return 0
    if args.output:
        save_mesh(mesh, args.output)
    if args.vtk:
        save_vtk(mesh, args.vtk)
    return 0


def _cmd_simulate(args) -> int:
    spec = exp.ExperimentSpec.from_file(args.config)
    mesh, props_true, truth, layout, fm, clean = exp.build_problem(spec)
    data = add_noise(clean, args.noise, args.seed)
    boundary_data_to_csv(data, layout, args.output)
    print(f"wrote {len(data)} measurements to {args.output}")
    return 0


def _cmd_reconstruct(args) -> int:
    spec = exp.ExperimentSpec.from_file(args.config)
    mesh, props_true, truth, layout, fm, clean = exp.build_problem(spec)
    solver_doc = next((s for s in spec.solvers if s["kind"] == args.solver), None)
    if solver_doc is None:
        solver_doc = {"kind": args.solver, "lambda": args.lam if args.lam else "lcurve"}
    if args.lam is not None:
        solver_doc = {**solver_doc, "lambda": args.lam}
    config = exp.resolve_cell(spec, solver_doc, args.noise)
    if args.data:
        data = boundary_data_from_csv(args.data)
    else:
        seed = exp.derive_seed(spec.master_seed, args.solver, args.noise, args.repeat)
        data = add_noise(clean, args.noise, seed)
    result = reconstruct(mesh, layout, data, config, forward_model=fm)
    result.save(args.output, mesh=mesh)
    print(
        f"{args.solver}: {result.iterations} outer iterations, "
        f"residual {result.initial_residual:.4g} -> {result.residuals[-1]:.4g}; "
        f"artifacts in {args.output}"
    )
    return 0


def _cmd_experiment(args) -> int:
    spec = exp.ExperimentSpec.from_file(args.config)
    if args.output:
        spec.output_dir = args.output
    if args.workers:
        spec.workers = args.workers
    status = exp.run_experiment(spec)
    print(f"experiment {spec.name}: {'ok' if status == 0 else 'FAILED RUNS'};"
          f" outputs in {spec.output_dir}")
    return status


def _cmd_metrics(args) -> int:
    spec = exp.ExperimentSpec.from_file(args.config)
    mesh, props_true, truth, layout, fm, clean = exp.build_problem(spec)
    field = _load_field_csv(args.field, mesh.n_nodes)
    report = evaluate_reconstruction(
        mesh,
        field,
        truth,
        float(spec.truth.get("mua_background", 0.01)),
        mode=spec.metrics.get("mode", "positive"),
        mask=spec.metrics.get("mask"),
    )
    line = (
        f"localization_error_mm={report.localization_error!r} "
        f"average_contrast={report.average_contrast!r} "
        f"psnr_db={report.psnr!r} "
        f"relative_recovered_volume_pct={report.relative_recovered_volume!r}"
    )
    print(line)
    if args.output:
        Path(args.output).write_text(line + "\n")
    return 0


def _load_field_csv(path, n_nodes: int) -> np.ndarray:
    values = np.full(n_nodes, np.nan)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "node" or header[-1] != "mua":
            raise ValueError(f"{path}: not a field CSV")
        for line in fh:
            parts = line.strip().split(",")
            if parts and parts[0]:
                values[int(parts[0])] = float(parts[-1])
    if np.any(np.isnan(values)):
        raise ValueError(f"{path}: field CSV does not cover all {n_nodes} nodes")
    return values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dottv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate or inspect a mesh")
    p.add_argument("action", help="'circle', 'layered', or a mesh file to inspect")
    p.add_argument("--radius", type=float, default=43.0)
    p.add_argument("--target-area", type=float, default=1.6977)
    p.add_argument("-o", "--output", help="write mesh in text format")
    p.add_argument("--vtk", help="write mesh in VTK legacy format")
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("simulate", help="forward-model boundary data plus noise")
    p.add_argument("--config", required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct", help="single reconstruction run")
    p.add_argument("--config", required=True)
    p.add_argument("--solver", required=True)
    p.add_argument("--data", help="boundary-data CSV; simulated when omitted")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--repeat", type=int, default=0)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("experiment", help="run the full experiment matrix")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output", help="override the spec's output directory")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("metrics", help="re-score a saved field CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_metrics)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
