"""Mortar interface operators, trace identities and the covered-region
reaction force.

The Lagrange-multiplier space is the trace of the local model along the
interface.  When the local boundary carries the same (quadratic) edges as
the global trace, the mortar matrices coincide up to DOF numbering and the
trace operators are boolean; with a linear local boundary (two edges per
quadratic interface edge) the mortar projection C_T^-1 C_1f is no longer
boolean and the deviation is reported as a diagnostic.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import elements
from .elasticity import assemble_loads, assemble_stiffness
from .errors import MeshError
from .mesh import FEMesh, InterfaceTrace


def expand_blockwise(scalar):
    """Scalar nodal matrix -> 2-DOF-per-node matrix."""
    return sps.kron(sps.csr_matrix(scalar), sps.identity(2), format="csr")


def edge_mass_matrix(coords, edges, etype):
    """Scalar 1D mass matrix of a chain of edge elements.

    coords holds the chain node coordinates (m, 2); `edges` indexes into it.
    The arc measure comes from the isoparametric edge map, so straight
    (edge2) chains integrate the facetted interface.
    """
    edges = np.asarray(edges, dtype=np.int64)
    m = coords.shape[0]
    pts, wts = elements.quadrature(etype)
    sf = elements.shape_functions(etype, pts)
    dsf = elements.shape_gradients(etype, pts)[:, :, 0]
    ecoords = coords[edges]
    tang = np.einsum("ga,eai->egi", dsf, ecoords)
    jac = np.linalg.norm(tang, axis=2)
    me = np.einsum("g,eg,ga,gb->eab", wts, jac, sf, sf)
    nen = edges.shape[1]
    rows = np.repeat(edges, nen, axis=1).ravel()
    cols = np.tile(edges, (1, nen)).ravel()
    return sps.coo_matrix((me.ravel(), (rows, cols)), shape=(m, m)).tocsr()


def interface_mass(trace: InterfaceTrace, mesh: FEMesh):
    """FE mass matrix of the interface trace of `mesh` (2 DOF per node)."""
    lookup = {int(n): k for k, n in enumerate(trace.node_indices)}
    edges = np.array([[lookup[int(n)] for n in e] for e in trace.edges])
    coords = mesh.nodes[trace.node_indices]
    return expand_blockwise(edge_mass_matrix(coords, edges, trace.edge_type))


def _subsegment_cross_mass(coords, edges_if):
    """Mass of linear multiplier functions against the quadratic trace.

    Every quadratic interface edge (a, b, mid) is split into the straight
    sub-segments a-mid and mid-b carrying the linear functions; integration
    uses the facetted (straight) measure.
    """
    m = coords.shape[0]
    pts, wts = elements.quadrature("edge3")
    s = pts[:, 0]
    lin = np.column_stack([0.5 * (1 - s), 0.5 * (1 + s)])
    out = sps.lil_matrix((m, m))
    for ia, ib, im in edges_if:
        for (r0, r1), xi in (((ia, im), 0.5 * (s - 1.0)), ((im, ib), 0.5 * (s + 1.0))):
            quad = elements.shape_functions("edge3", xi[:, None])
            half = 0.5 * np.linalg.norm(coords[r1] - coords[r0])
            block = np.einsum("g,ga,gb->ab", wts * half, lin, quad)
            for i, r in enumerate((r0, r1)):
                for j, c in enumerate((ia, ib, im)):
                    out[r, c] += block[i, j]
    return out.tocsr()


@dataclass
class InterfaceOperators:
    """Mortar and trace operators of one local model's interface."""

    c_t: sps.csr_matrix
    c_1f: sps.csr_matrix
    c_2: sps.csr_matrix
    t_1f: sps.csr_matrix
    t_2: sps.csr_matrix
    matched: bool
    trace_deviation: float

    def __post_init__(self):
        self._ct_factor = spla.splu(sps.csc_matrix(self.c_t))

    def ct_solve(self, rhs):
        """Apply C_T^-1 through the sparse factorization."""
        return self._ct_factor.solve(np.asarray(rhs, dtype=np.float64))

    @property
    def num_multiplier_dofs(self):
        return self.c_t.shape[0]

    def project_global_trace(self, u_1f):
        """Interface datum of the fine global field in the multiplier space:
        T_1f u for a matched interface, C_T^-1 C_1f u otherwise."""
        if self.matched:
            return self.t_1f @ u_1f
        return self.ct_solve(self.c_1f @ u_1f)

    def spread_multiplier(self, lam_tilde):
        """Interface load carried back to the fine global DOF:
        T_1f^T lam for a matched interface, C_1f^T C_T^-1 lam otherwise."""
        if self.matched:
            return self.t_1f.T @ lam_tilde
        return self.c_1f.T @ self.ct_solve(lam_tilde)


def build_interface_operators(
    trace: InterfaceTrace, global_mesh: FEMesh, local_mesh: FEMesh, local_iface_ids
) -> InterfaceOperators:
    """All five interface operators for one (conforming) local model."""
    local_iface_ids = np.asarray(local_iface_ids, dtype=np.int64)
    if local_iface_ids.size != trace.num_nodes:
        raise MeshError("local interface ids do not match the trace")
    bulk = {etype for etype, conn in local_mesh.blocks if etype in elements.BULK_TYPES}
    linear_local = bulk <= {"T3", "Q4"}
    matched = not linear_local
    coords = global_mesh.nodes[trace.node_indices]
    lookup = {int(n): k for k, n in enumerate(trace.node_indices)}
    edges_if = np.array([[lookup[int(n)] for n in e] for e in trace.edges])
    m = trace.num_nodes

    if matched:
        if trace.edge_type != "edge3":
            raise MeshError("matched coupling expects a quadratic interface")
        ct_scalar = edge_mass_matrix(coords, edges_if, "edge3")
        cross_scalar = ct_scalar
    else:
        # linear multiplier space on the sub-segments of the facetted interface
        sub = []
        for ia, ib, im in edges_if:
            sub.extend([(ia, im), (im, ib)])
        ct_scalar = edge_mass_matrix(coords, np.array(sub), "edge2")
        cross_scalar = _subsegment_cross_mass(coords, edges_if)

    c_t = expand_blockwise(ct_scalar)
    n_iface_dofs = 2 * m

    def scatter(bool_cols, num_nodes):
        rows = np.arange(n_iface_dofs)
        cols = np.stack([2 * bool_cols, 2 * bool_cols + 1], axis=1).ravel()
        return sps.csr_matrix(
            (np.ones(n_iface_dofs), (rows, cols)), shape=(n_iface_dofs, 2 * num_nodes)
        )

    t_1f = scatter(trace.node_indices, global_mesh.num_nodes)
    t_2 = scatter(local_iface_ids, local_mesh.num_nodes)
    c_1f = expand_blockwise(cross_scalar) @ t_1f
    c_2 = c_t @ t_2

    ops = InterfaceOperators(c_t, c_1f, c_2, t_1f, t_2, matched, 0.0)
    solved = ops.ct_solve((c_1f @ t_1f.T).toarray())
    ops.trace_deviation = float(np.abs(solved - np.eye(n_iface_dofs)).max())
    return ops


@dataclass
class CoveredRegion:
    """Zero-padded operators of the covered global elements."""

    element_ids: np.ndarray
    k_bar: sps.csr_matrix
    f_bar: np.ndarray


def build_covered_region(
    mesh: FEMesh, mat, element_ids, load=None, load_thickness=None
) -> CoveredRegion:
    element_ids = np.asarray(element_ids, dtype=np.int64)
    k_bar = assemble_stiffness(mesh, mat, element_ids)
    f_bar = np.zeros(mesh.num_dofs)
    if load is not None and load.neumann:
        covered_nodes = set()
        for b, sel in mesh.split_ids_by_block(element_ids):
            covered_nodes.update(mesh.blocks[b][1][sel].ravel().tolist())
        offs = mesh.block_offsets()
        edge_ids = []
        for b, (etype, conn) in enumerate(mesh.blocks):
            if etype not in elements.EDGE_TYPES:
                continue
            inside = np.all(np.isin(conn, list(covered_nodes)), axis=1)
            edge_ids.extend((offs[b] + np.nonzero(inside)[0]).tolist())
        if edge_ids:
            f_bar = assemble_loads(
                mesh, load, load_thickness or mat.thickness, np.array(edge_ids)
            )
    return CoveredRegion(element_ids, k_bar, f_bar)


def covered_reaction(region: CoveredRegion, u_1f, load_factor=1.0):
    """Interface reaction of the covered part: K_bar u - f_bar (zero outside
    the covered DOF support)."""
    if u_1f.shape[0] != region.k_bar.shape[0]:
        raise ValueError("displacement vector does not match the covered operator")
    return region.k_bar @ u_1f - load_factor * region.f_bar
