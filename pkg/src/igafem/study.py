"""Mesh-refinement convergence study: hybrid coupled runs against the
single-model (pure spline / pure FE) solutions, with the relative
strain-energy error measured against an overkill FE reference."""

from dataclasses import dataclass

import numpy as np

from .elasticity import relative_energy_error, strain_energy
from .errors import ConfigError
from .mesh import RegionSpec, generate_local_mesh
from .solver import (
    CoupledProblem,
    SolverOptions,
    build_global_model,
    build_local_model,
    run_coupling,
)
from .splines import refine_to_spans

HYBRID, PURE_IGA, PURE_FEM = "hybrid", "pure-IGA", "pure-FEM"


@dataclass
class StudyRow:
    variant: str
    level: int
    spans: tuple
    dofs: int
    energy: float
    error: float = None


def ladder(base_spans, levels):
    """Span counts per level: the base mesh doubled per level."""
    return [tuple(s * 2**k for s in base_spans) for k in range(levels)]


def scaled_region(region, factor):
    return tuple((a * factor, b * factor) for a, b in region)


def overkill_reference_energy(patch0, spans_finest, material, load, beyond=2):
    """Pure-FE (quadratic) solve at `beyond` uniform refinements past the
    finest study mesh; returns its strain energy."""
    spans = tuple(s * 2**beyond for s in spans_finest)
    patch_c, _ = refine_to_spans(patch0, spans)
    gm = build_global_model(patch_c, material, load, pure_fe=True)
    u = gm.operator.solve(gm.f_c, 1.0)
    return strain_energy(gm.k_c, u)


def pure_fe_energy(gm_builder_patch, spans, material, load, element=None):
    """Energy of the single-model FE solution.

    element=None solves the quadratic FE mesh directly; 'T6'/'T3' triangulate
    every span first (4 T6 or 16 T3 per quadratic span).
    """
    patch_c, _ = refine_to_spans(gm_builder_patch, spans)
    gm = build_global_model(patch_c, material, load, pure_fe=True)
    if element is None:
        u = gm.operator.solve(gm.f_c, 1.0)
        return strain_energy(gm.k_c, u), gm.k_c.shape[0]
    from .elasticity import ConstrainedOperator, assemble_loads, assemble_stiffness, dirichlet_dofs

    mesh = generate_local_mesh(
        gm.grid, ((0, spans[0]), (0, spans[1])), element=element
    )
    k = assemble_stiffness(mesh, material)
    f = assemble_loads(mesh, load, material.thickness)
    fixed, vals = dirichlet_dofs(load, mesh.node_sets, mesh.num_nodes)
    op = ConstrainedOperator(k, fixed, vals)
    u = op.solve(f, 1.0)
    return strain_energy(k, u), k.shape[0]


def hybrid_energy(patch0, spans, region, material, load, element="T6",
                  options=None):
    """Coupled global/local energy and the summed DOF count."""
    patch_c, _ = refine_to_spans(patch0, spans)
    gm = build_global_model(patch_c, material, load)
    loc = build_local_model("local", gm, RegionSpec(region, "local"), element=element)
    opts = options or SolverOptions(tol=1e-6, aitken=True, max_iters=300)
    problem = CoupledProblem(gm, [loc], opts)
    res = run_coupling(problem)
    dofs = gm.num_coarse_dofs + loc.mesh.num_dofs
    # pure-IGA solution comes free from the same factorized global model
    u_iga = gm.operator.solve(gm.f_c, 1.0)
    e_iga = strain_energy(gm.k_c, u_iga)
    return res.energies[-1], dofs, e_iga, gm.num_coarse_dofs


def run_study(patch0, base_spans, base_region, material, load, levels,
              element="T6", reference_energy=None, options=None):
    """Rows of (variant, level, spans, dofs, energy, Err^h) for the three
    curves; the reference energy is computed by an overkill solve when not
    supplied."""
    if levels < 1:
        raise ConfigError("study needs at least one level")
    spans_list = ladder(base_spans, levels)
    if reference_energy is None:
        reference_energy = overkill_reference_energy(
            patch0, spans_list[-1], material, load
        )
    rows = []
    for level, spans in enumerate(spans_list):
        region = scaled_region(base_region, 2**level)
        e_hyb, dofs_hyb, e_iga, dofs_iga = hybrid_energy(
            patch0, spans, region, material, load, element, options
        )
        e_fem, dofs_fem = pure_fe_energy(patch0, spans, material, load, element)
        rows.append(StudyRow(HYBRID, level, spans, dofs_hyb, e_hyb,
                             relative_energy_error(e_hyb, reference_energy)))
        rows.append(StudyRow(PURE_IGA, level, spans, dofs_iga, e_iga,
                             relative_energy_error(e_iga, reference_energy)))
        rows.append(StudyRow(PURE_FEM, level, spans, dofs_fem, e_fem,
                             relative_energy_error(e_fem, reference_energy)))
    return rows, reference_energy


def loglog_slope(dofs, errors):
    """Least-squares slope of log(error) vs log(dofs)."""
    x = np.log(np.asarray(dofs, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
