"""Shared test oracles, generators and canonical problem builders."""

import numpy as np

from igafem.elasticity import LoadCase, Material
from igafem.mesh import FEMesh, RegionSpec, covered_element_ids
from igafem.solver import (
    CoupledProblem,
    SolverOptions,
    build_global_model,
    build_local_model,
)
from igafem.splines import (
    KnotVector,
    SplinePatch,
    quarter_annulus_patch,
    refine_to_spans,
    square_patch,
)


def cox_de_boor(knots, p, i, x):
    """Textbook Cox-de Boor recursion for a single basis function value."""
    knots = np.asarray(knots, dtype=float)
    if p == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        # close the last non-empty span so the right domain end is included
        if x == knots[-1] and knots[i] < knots[i + 1] and knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    out = 0.0
    den1 = knots[i + p] - knots[i]
    if den1 > 0.0:
        out += (x - knots[i]) / den1 * cox_de_boor(knots, p - 1, i, x)
    den2 = knots[i + p + 1] - knots[i + 1]
    if den2 > 0.0:
        out += (knots[i + p + 1] - x) / den2 * cox_de_boor(knots, p - 1, i + 1, x)
    return out


def basis_oracle(knots, p, x):
    """All basis values at x via the plain recursion."""
    n = len(knots) - p - 1
    return np.array([cox_de_boor(knots, p, i, x) for i in range(n)])


def rational_basis_oracle(patch: SplinePatch, pt):
    """Dense rational tensor-product basis evaluation from first principles."""
    pt = np.atleast_1d(np.asarray(pt, dtype=float))
    per_dir = []
    for d, kv in enumerate(patch.knot_vectors):
        per_dir.append(basis_oracle(kv.values, kv.degree, pt[d]))
    if patch.ndim == 1:
        bs = per_dir[0]
    else:
        bs = np.einsum("j,i->ji", per_dir[1], per_dir[0]).ravel()
    num = patch.weights * bs
    return num / num.sum()


def random_open_kv(rng, degree, max_breaks=4, min_breaks=0):
    """Random admissible open knot vector on [0, 1]."""
    nb = int(rng.integers(min_breaks, max_breaks + 1))
    grid = np.linspace(0.05, 0.95, 19)
    breaks = np.sort(rng.choice(grid, size=nb, replace=False)) if nb else []
    vals = [0.0] * (degree + 1)
    for u in breaks:
        mult = int(rng.integers(1, degree + 1))
        vals.extend([float(u)] * mult)
    vals.extend([1.0] * (degree + 1))
    return KnotVector(np.array(vals), degree)


def lagrange_values_oracle(nodes_1d, degree, x):
    """C0 piecewise-Lagrange basis values from the product formula."""
    nodes_1d = np.asarray(nodes_1d, dtype=float)
    breaks = nodes_1d[::degree]
    span = int(np.searchsorted(breaks, x, side="right") - 1)
    span = min(max(span, 0), len(breaks) - 2)
    local = nodes_1d[span * degree : span * degree + degree + 1]
    out = np.zeros(nodes_1d.size)
    for k in range(degree + 1):
        val = 1.0
        for m in range(degree + 1):
            if m != k:
                val *= (x - local[m]) / (local[k] - local[m])
        out[span * degree + k] = val
    return out


def lagrange_values_oracle_2d(params, degrees, pt):
    lx = lagrange_values_oracle(params[0], degrees[0], pt[0])
    ly = lagrange_values_oracle(params[1], degrees[1], pt[1])
    return np.einsum("j,i->ji", ly, lx).ravel()


def random_bspline_patch(rng, degree, ndim, phys_dim=2, max_breaks=3):
    """Random polynomial (weight-1) patch with a random control net."""
    kvs = tuple(random_open_kv(rng, degree, max_breaks) for _ in range(ndim))
    n_cp = int(np.prod([kv.num_basis for kv in kvs]))
    cps = rng.uniform(-2.0, 2.0, size=(n_cp, phys_dim))
    return SplinePatch(kvs, cps)


def submesh_q9(grid, fine_ranges):
    """Covered-region Q9 submesh with renumbered nodes and inherited sets."""
    covered = covered_element_ids(grid, fine_ranges)
    conn = grid.mesh.blocks[0][1][covered]
    used = np.unique(conn)
    remap = -np.ones(grid.mesh.num_nodes, dtype=np.int64)
    remap[used] = np.arange(used.size)
    mesh = FEMesh(grid.mesh.nodes[used], [("Q9", remap[conn])])
    for name, gset in grid.mesh.node_sets.items():
        shared = remap[gset]
        shared = shared[shared >= 0]
        if shared.size:
            mesh.node_sets[name] = np.sort(shared)
    return mesh


def inclusion_local_mesh(grid, trace, radius=0.8, layers_out=4, layers_in=3):
    """O-grid T3 mesh of a square covered region holding a circular
    inclusion with a duplicated (cohesive) ring of nodes at its boundary.

    The outer boundary nodes coincide with the interface trace nodes, two
    linear segments per quadratic span edge.  Node sets: 'interface' plus
    the cohesive pair chains 'coh_in' (inclusion side, CCW) / 'coh_out'.
    """
    boundary = grid.mesh.nodes[trace.node_indices]
    assert trace.closed
    nb = boundary.shape[0]
    center = 0.5 * (boundary.min(axis=0) + boundary.max(axis=0))
    theta = np.arctan2(boundary[:, 1] - center[1], boundary[:, 0] - center[0])
    ring = center + radius * np.column_stack([np.cos(theta), np.sin(theta)])

    # the trace walks CCW around the region; keep that orientation
    pts = []
    def add(arr):
        k0 = len(pts)
        pts.extend(arr.tolist())
        return np.arange(k0, k0 + len(arr))

    matrix_ring = add(ring)  # matrix side of the cohesive interface
    layer_ids = [matrix_ring]
    for l in range(1, layers_out):
        t = l / layers_out
        layer_ids.append(add((1 - t) * ring + t * boundary))
    outer = add(boundary)
    layer_ids.append(outer)

    tris = []
    for la, lb in zip(layer_ids[:-1], layer_ids[1:]):
        for i in range(nb):
            j = (i + 1) % nb
            tris.append([la[i], la[j], lb[j]])
            tris.append([la[i], lb[j], lb[i]])

    incl_ring = add(ring)  # inclusion side (duplicated coordinates)
    inner_layers = [incl_ring]
    for l in range(1, layers_in):
        r = radius * (1 - l / layers_in)
        inner_layers.append(add(center + r * np.column_stack([np.cos(theta), np.sin(theta)])))
    center_id = add(np.array([center]))[0]
    for la, lb in zip(inner_layers[:-1], inner_layers[1:]):
        for i in range(nb):
            j = (i + 1) % nb
            tris.append([lb[i], lb[j], la[j]])
            tris.append([lb[i], la[j], la[i]])
    fan = inner_layers[-1]
    for i in range(nb):
        j = (i + 1) % nb
        tris.append([center_id, fan[i], fan[j]])

    mesh = FEMesh(np.array(pts), [("T3", np.asarray(tris, dtype=np.int64))])
    # orientation: flip any negatively oriented triangle
    conn = mesh.blocks[0][1]
    v = mesh.nodes[conn]
    det = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 2, 0] - v[:, 0, 0]
    ) * (v[:, 1, 1] - v[:, 0, 1])
    flip = det < 0
    conn[flip] = conn[flip][:, [0, 2, 1]]
    mesh.node_sets["interface"] = outer
    mesh.node_sets["coh_in"] = incl_ring
    mesh.node_sets["coh_out"] = matrix_ring
    mesh.validate_jacobians()
    return mesh


def plate_regions(n_inclusions):
    """Covered regions (in 16x16 coarse spans) for 1 or 4 inclusions."""
    if n_inclusions == 1:
        return [((6, 10), (6, 10))]
    if n_inclusions == 4:
        return [
            ((2, 6), (2, 6)),
            ((10, 14), (2, 6)),
            ((2, 6), (10, 14)),
            ((10, 14), (10, 14)),
        ]
    raise ValueError(n_inclusions)


PLATE_MAT = Material(10000.0, 0.3)
PLATE_LAW_PARAMS = dict(sigma_c=10.0, g_c=0.005, penalty=0.1)
PLATE_WD = 0.0175


def plate_problem(
    n_inclusions=1,
    nspans=(16, 16),
    refinement=(2, 2),
    side=10.0,
    steps=4,
    radius=0.8,
    tol=1e-4,
    elastic_only=False,
    max_iters=100,
):
    """Square plate under traction via a prescribed edge displacement, with
    cohesive inclusion local models (reduced local mesh density by default)."""
    from igafem.cohesive import CohesiveLaw, build_cohesive_zone
    from igafem.mesh import extract_interface

    patch_c, _ = refine_to_spans(square_patch(side), nspans)
    load = LoadCase(
        dirichlet=[
            ("side_xi0", "x", 0.0),
            ("side_eta0", "y", 0.0),
            ("side_xi1", "x", PLATE_WD),
        ]
    )
    gm = build_global_model(patch_c, PLATE_MAT, load, refinement)
    law = CohesiveLaw(**PLATE_LAW_PARAMS)
    locs = []
    for k, region in enumerate(plate_regions(n_inclusions)):
        r1 = refinement[0]
        fine_ranges = tuple((a * r1, b * r1) for a, b in region)
        trace = extract_interface(gm.grid, fine_ranges)
        mesh = inclusion_local_mesh(gm.grid, trace, radius=radius)
        zone = build_cohesive_zone(
            mesh,
            mesh.node_sets["coh_in"],
            mesh.node_sets["coh_out"],
            law,
            closed=True,
            thickness=PLATE_MAT.thickness,
        )
        zone.elastic_only = elastic_only
        locs.append(
            build_local_model(
                f"inc{k}",
                gm,
                RegionSpec(region, f"inc{k}"),
                mesh=mesh,
                cohesive=zone,
            )
        )
    opts = SolverOptions(tol=tol, aitken=True, load_steps=steps, max_iters=max_iters)
    return CoupledProblem(gm, locs, opts)


BEAM_MAT = Material(1000.0, 0.3)
BEAM_LOAD = LoadCase(
    dirichlet=[
        ("side_xi1", "x", -0.01),
        ("side_xi1", "y", 0.0),
        ("side_xi0", "x", 0.0),
        ("side_xi0", "y", 0.0),
    ]
)


def beam_region(nspans):
    """Covered corner at the loaded (theta=0) end, inner radius: the same
    physical region (last third of the arc, first quarter radially) at any
    mesh density."""
    n1, n2 = nspans
    return ((n1 - n1 // 3, n1), (0, n2 // 4))


def curved_beam_problem(
    nspans=(12, 8),
    element="T6",
    local_refinement=(1, 1),
    region=None,
    options=None,
    pure_fe=False,
):
    """End-loaded quarter-annulus beam with one corner local model."""
    patch_c, _ = refine_to_spans(quarter_annulus_patch(5.0, 10.0), nspans)
    gm = build_global_model(
        patch_c, BEAM_MAT, BEAM_LOAD, local_refinement, pure_fe=pure_fe
    )
    spec = RegionSpec(region if region is not None else beam_region(nspans), "corner")
    loc = build_local_model("corner", gm, spec, element=element)
    opts = options or SolverOptions(tol=1e-8, aitken=False)
    return CoupledProblem(gm, [loc], opts)


def square_problem(
    nspans=(4, 4),
    region=((0, 2), (0, 2)),
    element="T6",
    options=None,
    side=2.0,
    load=None,
):
    """Sheared square plate with one corner local model (straight interfaces)."""
    patch_c, _ = refine_to_spans(square_patch(side), nspans)
    load = load or LoadCase(
        dirichlet=[
            ("side_xi0", "x", 0.0),
            ("side_xi0", "y", 0.0),
            ("side_xi1", "x", 0.01),
            ("side_xi1", "y", 0.004),
        ]
    )
    gm = build_global_model(patch_c, BEAM_MAT, load)
    loc = build_local_model("patch0", gm, RegionSpec(region, "r0"), element=element)
    return CoupledProblem(gm, [loc], options or SolverOptions(tol=1e-10, aitken=False))
