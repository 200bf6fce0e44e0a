"""Command-line driver: `igafem solve|converge-study|extract <config>`.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import (
    build_load_case,
    build_material,
    build_patch,
    build_problem,
    load_config,
)
from .elasticity import nodal_stress
from .errors import ConfigError, IgafemError, NonConvergenceError
from .extraction import fe_nodes
from .mesh import write_mesh, FEMesh
from .solver import run_coupling
from .sparse_io import write_triplets
from .study import loglog_slope, run_study
from .vtkio import von_mises, write_vtk


def _write_history_csv(path, history):
    lines = ["iteration,residual,omega"]
    for it, res, omega in history:
        lines.append(f"{it},{res:.17g},{omega:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def _write_outputs(cfg, problem, result, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    gm = problem.global_model
    mesh = gm.grid.mesh
    covered = (
        np.concatenate([loc.covered.element_ids for loc in problem.locals])
        if problem.locals
        else np.array([], dtype=np.int64)
    )
    uncovered = np.setdiff1d(mesh.bulk_element_ids(), covered)
    u_f = result.u_f
    disp = u_f.reshape(-1, 2)
    stress = nodal_stress(mesh, gm.material, u_f, uncovered)
    write_vtk(
        outdir / "global.vtk",
        mesh,
        point_data={
            "displacement": disp,
            "von_mises": von_mises(stress),
            "stress_xx": stress[:, 0],
            "stress_yy": stress[:, 1],
            "stress_xy": stress[:, 2],
        },
        element_ids=uncovered,
        title="global model (covered region excluded)",
    )
    for loc in problem.locals:
        u2 = result.u_locals[loc.name]
        sloc = nodal_stress(loc.mesh, loc.material, u2)
        extra = None
        if loc.cohesive is not None:
            status = loc.cohesive.statuses()
            segs = loc.cohesive.segments
            pairs = loc.cohesive.pairs
            extra = [
                (
                    (pairs[i, 0], pairs[j, 0]),
                    {"cohesive_status": int(max(status[i], status[j]))},
                )
                for i, j in segs
            ]
        write_vtk(
            outdir / f"local_{loc.name}.vtk",
            loc.mesh,
            point_data={
                "displacement": u2.reshape(-1, 2),
                "von_mises": von_mises(sloc),
                "stress_xx": sloc[:, 0],
                "stress_yy": sloc[:, 1],
                "stress_xy": sloc[:, 2],
            },
            extra_lines=extra,
            title=f"local model {loc.name}",
        )
    for step, history in enumerate(result.histories, start=1):
        _write_history_csv(outdir / f"convergence_step{step}.csv", history)
    lines = ["igafem solve summary", "===================="]
    for step, (hist, energy) in enumerate(zip(result.histories, result.energies), 1):
        reaction = result.reactions[step - 1]
        lines.append(
            f"step {step}: iterations {len(hist)}, final residual {hist[-1][1]:.3e}, "
            f"coupled strain energy {energy:.12e}, "
            f"total reaction ({reaction[0::2].sum():.6e}, {reaction[1::2].sum():.6e})"
        )
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")


def cmd_solve(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    problem = build_problem(cfg)
    outdir = Path(args.output_dir or cfg.base_dir / cfg.output_dir)
    try:
        result = run_coupling(problem)
    except NonConvergenceError as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        for step, history in enumerate(exc.history, start=1):
            _write_history_csv(outdir / f"convergence_step{step}.csv", history)
        print(f"igafem: {exc}", file=sys.stderr)
        return 3
    _write_outputs(cfg, problem, result, outdir)
    print(
        f"converged: {len(result.histories)} step(s), "
        f"iterations per step {result.iterations_per_step}, outputs in {outdir}"
    )
    return 0


def cmd_converge_study(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    if cfg.locals:
        element = cfg.locals[0].element
        base_region = cfg.locals[0].region
    else:
        raise ConfigError("converge-study needs one local model as the region seed")
    outdir = Path(args.output_dir or cfg.base_dir / cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    patch0 = build_patch(cfg.patch)
    material = build_material(cfg.material)
    load = build_load_case(cfg.load)
    ref = cfg.reference_energy
    cache = outdir / "reference_energy.txt"
    if ref is None and cache.exists():
        ref = float(cache.read_text().split()[0])
    rows, ref = run_study(
        patch0,
        cfg.elements,
        base_region,
        material,
        load,
        levels=args.levels,
        element=element,
        reference_energy=ref,
    )
    cache.write_text(f"{ref:.17g}\n")
    lines = ["variant,level,spans1,spans2,dofs,energy,relative_error"]
    for row in rows:
        lines.append(
            f"{row.variant},{row.level},{row.spans[0]},{row.spans[1]},"
            f"{row.dofs},{row.energy:.17g},{row.error:.17g}"
        )
    (outdir / "convergence_study.csv").write_text("\n".join(lines) + "\n")
    for variant in ("hybrid", "pure-IGA", "pure-FEM"):
        sel = [r for r in rows if r.variant == variant]
        slope = loglog_slope([r.dofs for r in sel], [r.error for r in sel])
        print(f"{variant}: slope {slope:.2f} (error vs DOF, log-log)")
    print(f"reference energy {ref:.12e}; table in {outdir / 'convergence_study.csv'}")
    return 0


def cmd_extract(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    problem = build_problem(cfg)
    gm = problem.global_model
    outdir = Path(args.output_dir or cfg.base_dir / cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_triplets(outdir / "refinement_D_IG.txt", gm.refine_op.matrix)
    write_triplets(outdir / "bridge_D_FE.txt", gm.fine_bridge.matrix)
    write_triplets(outdir / "composed_D_IGFE.txt", gm.bridge.matrix)
    nodes = fe_nodes(gm.patch_f, gm.fine_bridge)
    with open(outdir / "fe_nodes.txt", "w") as fh:
        fh.write(f"{nodes.shape[0]}\n")
        for k, (x, y) in enumerate(nodes):
            fh.write(f"{k} {x:.17g} {y:.17g}\n")
    write_mesh(gm.grid.mesh, outdir / "global_fe.msh")
    for loc in problem.locals:
        write_triplets(outdir / f"trace_T1f_{loc.name}.txt", loc.ops.t_1f)
        write_triplets(outdir / f"trace_T2_{loc.name}.txt", loc.ops.t_2)
        iface_nodes = gm.grid.mesh.nodes[loc.trace.node_indices]
        remap = {int(n): k for k, n in enumerate(loc.trace.node_indices)}
        conn = np.array([[remap[int(n)] for n in e] for e in loc.trace.edges])
        iface_mesh = FEMesh(iface_nodes, [(loc.trace.edge_type, conn)])
        write_mesh(iface_mesh, outdir / f"interface_{loc.name}.msh")
    print(f"operators and meshes written to {outdir}")
    return 0


def _apply_overrides(cfg, args):
    if getattr(args, "tol", None) is not None:
        cfg.solver["tol"] = args.tol
    if getattr(args, "max_iters", None) is not None:
        cfg.solver["max_iters"] = args.max_iters
    if getattr(args, "no_aitken", False):
        cfg.solver["aitken"] = False


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="igafem",
        description="Hybrid global-spline / local-FE plane-stress solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="path to the JSON problem configuration")
        p.add_argument("--tol", type=float, help="coupling tolerance override")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--no-aitken", action="store_true", dest="no_aitken")
        p.add_argument("--output-dir", dest="output_dir")

    p_solve = sub.add_parser("solve", help="run the coupled solve")
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_study = sub.add_parser("converge-study", help="energy-error convergence study")
    common(p_study)
    p_study.add_argument("--levels", type=int, default=5)
    p_study.set_defaults(func=cmd_converge_study)

    p_ex = sub.add_parser("extract", help="dump bridge/trace operators and meshes")
    common(p_ex)
    p_ex.set_defaults(func=cmd_extract)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"igafem: configuration error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"igafem: {exc}", file=sys.stderr)
        return 3
    except IgafemError as exc:
        print(f"igafem: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
