"""Finite-element meshes: the global FE mesh derived from the bridge, the
conforming interface of a covered region, local mesh generation and the
mesh text format.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.spatial import cKDTree

from . import _kernels, elements
from .errors import ConformityError, MeshError, MeshParseError
from .extraction import BridgeOperator, fe_nodes
from .splines import SplinePatch

# relative tolerance (times the bounding-box diagonal) for matching imported
# interface nodes to the trace
MATCH_REL_TOL = 1e-8


@dataclass
class FEMesh:
    """Nodes, element blocks of homogeneous type, and named sets.

    Flat element ids enumerate the blocks in order; node/element sets store
    0-based indices.
    """

    nodes: np.ndarray
    blocks: list
    node_sets: dict = field(default_factory=dict)
    element_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        blocks = []
        for etype, conn in self.blocks:
            conn = np.asarray(conn, dtype=np.int64)
            if conn.ndim != 2 or conn.shape[1] != elements.num_nodes(etype):
                raise MeshError(
                    f"{etype} connectivity must have {elements.num_nodes(etype)} nodes per element"
                )
            if conn.size and (conn.min() < 0 or conn.max() >= self.nodes.shape[0]):
                raise MeshError(f"{etype} connectivity index out of range")
            blocks.append((etype, conn))
        self.blocks = blocks

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_dofs(self):
        return 2 * self.nodes.shape[0]

    @property
    def num_elements(self):
        return sum(conn.shape[0] for _, conn in self.blocks)

    def block_offsets(self):
        offs = [0]
        for _, conn in self.blocks:
            offs.append(offs[-1] + conn.shape[0])
        return offs

    def bulk_element_ids(self):
        offs = self.block_offsets()
        ids = []
        for b, (etype, conn) in enumerate(self.blocks):
            if etype in elements.BULK_TYPES:
                ids.append(np.arange(offs[b], offs[b] + conn.shape[0]))
        return np.concatenate(ids) if ids else np.array([], dtype=np.int64)

    def split_ids_by_block(self, ids):
        """Group flat element ids per block: list of (block_index, rows)."""
        ids = np.asarray(ids, dtype=np.int64)
        offs = self.block_offsets()
        out = []
        for b in range(len(self.blocks)):
            sel = ids[(ids >= offs[b]) & (ids < offs[b + 1])] - offs[b]
            if sel.size:
                out.append((b, sel))
        return out

    def validate_jacobians(self):
        """All bulk elements must have positive Jacobian at quadrature points."""
        for etype, conn in self.blocks:
            if etype not in elements.BULK_TYPES or conn.shape[0] == 0:
                continue
            pts, _ = elements.quadrature(etype)
            dshp = elements.shape_gradients(etype, pts)
            coords = self.nodes[conn]
            mins = _kernels.min_jacobian_batch(coords, dshp)
            if mins.min() <= 0.0:
                bad = int(np.argmin(mins))
                raise MeshError(
                    f"degenerate {etype} element {bad}: min Jacobian {mins.min():g}"
                )

    def bbox_diagonal(self):
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(np.hypot(*(hi - lo)))


@dataclass(frozen=True)
class RegionSpec:
    """Half-open knot-span index ranges (per direction) of a covered region
    in the solved coarse patch."""

    ranges: tuple
    name: str = "local"

    def __post_init__(self):
        rng = tuple((int(a), int(b)) for a, b in self.ranges)
        object.__setattr__(self, "ranges", rng)
        for a, b in rng:
            if b <= a or a < 0:
                raise MeshError(f"empty or negative span range {a}:{b}")

    def validate_against(self, patch: SplinePatch):
        spans = patch.spans()
        total = 1
        cover = 1
        for (a, b), n in zip(self.ranges, spans):
            if b > n:
                raise MeshError(
                    f"region {self.name}: span range {a}:{b} outside patch ({n} spans)"
                )
            total *= n
            cover *= b - a
        if cover >= total:
            raise MeshError(f"region {self.name} must be strictly smaller than the patch")

    def fine_ranges(self, patch_c: SplinePatch, patch_f: SplinePatch):
        """Translate coarse span ranges to fine span ranges via breakpoints."""
        out = []
        for d, (a, b) in enumerate(self.ranges):
            cb = patch_c.knot_vectors[d].breakpoints()
            fb = patch_f.knot_vectors[d].breakpoints()
            tol = patch_f.knot_vectors[d].knot_tol
            ia = int(np.argmin(np.abs(fb - cb[a])))
            ib = int(np.argmin(np.abs(fb - cb[b])))
            if abs(fb[ia] - cb[a]) > tol or abs(fb[ib] - cb[b]) > tol:
                raise MeshError("fine knot vector does not contain the coarse breakpoints")
            out.append((ia, ib))
        return tuple(out)

    def overlaps(self, other):
        for (a, b), (c, d) in zip(self.ranges, other.ranges):
            if b <= c or d <= a:
                return False
        return True


@dataclass
class StructuredGrid:
    """Global FE mesh with its structured (tensor-grid) metadata."""

    mesh: FEMesh
    degree: int
    spans: tuple  # (n1, n2) knot spans = elements per direction
    node_shape: tuple  # (nn1, nn2), node id = i + j*nn1

    def node_id(self, i, j):
        return i + j * self.node_shape[0]

    def element_id(self, e1, e2):
        return e1 + e2 * self.spans[0]


def build_global_fe_mesh(patch_f: SplinePatch, bridge: BridgeOperator) -> StructuredGrid:
    """FE mesh equivalent to the fine patch: nodes from the bridge (one FE
    element per knot span), plus boundary edge blocks and side sets."""
    if patch_f.ndim != 2:
        raise MeshError("global FE mesh requires a 2D patch")
    p = patch_f.degrees[0]
    if patch_f.degrees[1] != p or p not in (1, 2):
        raise MeshError("global FE mesh supports degrees (1,1) or (2,2)")
    nodes = fe_nodes(patch_f, bridge)
    n1, n2 = patch_f.spans()
    nn1, nn2 = p * n1 + 1, p * n2 + 1
    if bridge.nodes_shape != (nn1, nn2):
        raise MeshError("bridge node grid does not match the patch spans")

    def nid(i, j):
        return i + j * nn1

    conn = np.empty((n1 * n2, 9 if p == 2 else 4), dtype=np.int64)
    for e2 in range(n2):
        for e1 in range(n1):
            e = e1 + e2 * n1
            i0, j0 = p * e1, p * e2
            if p == 2:
                conn[e] = [
                    nid(i0, j0), nid(i0 + 2, j0), nid(i0 + 2, j0 + 2), nid(i0, j0 + 2),
                    nid(i0 + 1, j0), nid(i0 + 2, j0 + 1), nid(i0 + 1, j0 + 2), nid(i0, j0 + 1),
                    nid(i0 + 1, j0 + 1),
                ]
            else:
                conn[e] = [nid(i0, j0), nid(i0 + 1, j0), nid(i0 + 1, j0 + 1), nid(i0, j0 + 1)]
    bulk = ("Q9" if p == 2 else "Q4", conn)

    # boundary edge blocks, one per patch side
    etype = "edge3" if p == 2 else "edge2"
    ii = np.arange(nn1)
    jj = np.arange(nn2)
    side_nodes = {
        "side_xi0": nid(0, jj),
        "side_xi1": nid(nn1 - 1, jj),
        "side_eta0": nid(ii, 0),
        "side_eta1": nid(ii, nn2 - 1),
    }

    def side_edges(idx):
        ne = (idx.size - 1) // p
        out = np.empty((ne, p + 1), dtype=np.int64)
        for e in range(ne):
            a = p * e
            if p == 2:
                out[e] = [idx[a], idx[a + 2], idx[a + 1]]
            else:
                out[e] = [idx[a], idx[a + 1]]
        return out

    blocks = [bulk]
    element_sets = {}
    offset = conn.shape[0]
    for name, idx in side_nodes.items():
        econn = side_edges(np.asarray(idx))
        blocks.append((etype, econn))
        element_sets[name] = np.arange(offset, offset + econn.shape[0])
        offset += econn.shape[0]

    mesh = FEMesh(nodes, blocks, dict(side_nodes), element_sets)
    mesh.validate_jacobians()
    return StructuredGrid(mesh, p, (n1, n2), (nn1, nn2))


def covered_element_ids(grid: StructuredGrid, fine_ranges):
    (i0, i1), (j0, j1) = fine_ranges
    e1 = np.arange(i0, i1)
    e2 = np.arange(j0, j1)
    return (e1[None, :] + e2[:, None] * grid.spans[0]).ravel()


@dataclass
class InterfaceTrace:
    """Ordered interface nodes with their boolean DOF trace operator."""

    node_indices: np.ndarray
    edges: np.ndarray  # (ne, nodes_per_edge), mesh node ids, chain order
    edge_type: str
    closed: bool
    mesh_num_nodes: int

    @property
    def num_nodes(self):
        return self.node_indices.size

    @property
    def trace_matrix(self):
        """Boolean selection of interface DOF: (2*n_iface, 2*n_mesh)."""
        n = self.node_indices.size
        rows = np.arange(2 * n)
        cols = np.stack(
            [2 * self.node_indices, 2 * self.node_indices + 1], axis=1
        ).ravel()
        return sps.csr_matrix(
            (np.ones(2 * n), (rows, cols)), shape=(2 * n, 2 * self.mesh_num_nodes)
        )


def extract_interface(grid: StructuredGrid, fine_ranges) -> InterfaceTrace:
    """Ordered interface of the covered region: the part of its boundary that
    is interior to the patch, walked counterclockwise around the region."""
    (i0, i1), (j0, j1) = fine_ranges
    n1, n2 = grid.spans
    p = grid.degree
    if i1 > n1 or j1 > n2:
        raise MeshError("region outside fine span grid")

    def nid(i, j):
        return grid.node_id(i, j)

    def edge(a, b, m):
        return (a, b, m) if p == 2 else (a, b)

    # directed edge runs of the four legs, CCW around the region; a leg on
    # the patch boundary belongs to the outer boundary, not to the interface
    def leg_edges(side):
        if side == 0:  # bottom, left -> right
            return [
                edge(nid(p * e, p * j0), nid(p * e + p, p * j0), nid(p * e + 1, p * j0))
                for e in range(i0, i1)
            ]
        if side == 1:  # right, bottom -> top
            return [
                edge(nid(p * i1, p * e), nid(p * i1, p * e + p), nid(p * i1, p * e + 1))
                for e in range(j0, j1)
            ]
        if side == 2:  # top, right -> left
            return [
                edge(nid(p * e + p, p * j1), nid(p * e, p * j1), nid(p * e + 1, p * j1))
                for e in range(i1 - 1, i0 - 1, -1)
            ]
        # left, top -> bottom
        return [
            edge(nid(p * i0, p * e + p), nid(p * i0, p * e), nid(p * i0, p * e + 1))
            for e in range(j1 - 1, j0 - 1, -1)
        ]

    interior = [j0 > 0, i1 < n1, j1 < n2, i0 > 0]
    present = [s for s in range(4) if interior[s]]
    if not present:
        raise MeshError("region boundary lies entirely on the patch boundary")
    closed = len(present) == 4
    if not closed:
        # start right after a gap so the open chain is one contiguous walk
        start = next(s for s in range(4) if interior[s] and not interior[(s - 1) % 4])
        present = [(start + k) % 4 for k in range(4) if interior[(start + k) % 4]]
        for a, b in zip(present[:-1], present[1:]):
            if (a + 1) % 4 != b:
                raise MeshError("disconnected interface chains are not supported")

    edges = []
    for s in present:
        edges.extend(leg_edges(s))
    edges = np.asarray(edges, dtype=np.int64)

    # ordered unique node walk along the chain
    node_order = []
    for e, edge in enumerate(edges):
        a, b = edge[0], edge[1]
        if e == 0:
            node_order.append(a)
        if p == 2:
            node_order.append(edge[2])
        node_order.append(b)
    if closed and node_order[-1] == node_order[0]:
        node_order.pop()
    nodes = np.asarray(node_order, dtype=np.int64)
    if len(set(nodes.tolist())) != nodes.size:
        raise MeshError("interface walk revisits a node")
    return InterfaceTrace(
        nodes, edges, "edge3" if p == 2 else "edge2", closed, grid.mesh.num_nodes
    )


def _span_extra_points(grid: StructuredGrid, e1, e2):
    """Physical images of the four (+-1/2, +-1/2) points of one span."""
    econn = grid.mesh.blocks[0][1][grid.element_id(e1, e2)]
    coords = grid.mesh.nodes[econn]
    local = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    sf = elements.shape_functions("Q9", local)
    return sf @ coords


def generate_local_mesh(grid: StructuredGrid, fine_ranges, element="T6"):
    """Triangulate the covered spans into a conforming local mesh.

    T6 splits each quadratic span into 4 quadratic triangles; T3 puts 2
    linear boundary edges per quadratic span edge (16 T3 per span). Local
    boundary nodes coincide with the global interface nodes by construction.
    """
    if grid.degree != 2:
        raise MeshError("local mesh generation requires a quadratic global mesh")
    if element not in ("T6", "T3"):
        raise MeshError(f"unsupported local element type {element}")
    (i0, i1), (j0, j1) = fine_ranges
    nn1 = grid.node_shape[0]

    # reused global grid nodes of the covered spans
    gi = np.arange(2 * i0, 2 * i1 + 1)
    gj = np.arange(2 * j0, 2 * j1 + 1)
    gids = (gi[None, :] + gj[:, None] * nn1).ravel()
    g2l = {int(g): k for k, g in enumerate(gids)}
    pts = [grid.mesh.nodes[gids]]
    next_id = gids.size

    tris = []
    for e2 in range(j0, j1):
        for e1 in range(i0, i1):
            extra = _span_extra_points(grid, e1, e2)
            hids = list(range(next_id, next_id + 4))
            pts.append(extra)
            next_id += 4
            i, j = 2 * e1, 2 * e2
            c = [g2l[i + j * nn1], g2l[i + 2 + j * nn1],
                 g2l[i + 2 + (j + 2) * nn1], g2l[i + (j + 2) * nn1]]
            m = [g2l[i + 1 + j * nn1], g2l[i + 2 + (j + 1) * nn1],
                 g2l[i + 1 + (j + 2) * nn1], g2l[i + (j + 1) * nn1]]
            o = g2l[i + 1 + (j + 1) * nn1]
            if element == "T6":
                for k in range(4):
                    a, b = c[k], c[(k + 1) % 4]
                    tris.append([a, b, o, m[k], hids[(k + 1) % 4], hids[k]])
            else:
                # four sub-quads, each split into 4 T3 through its center
                quads = [
                    (c[0], m[0], o, m[3], hids[0]),
                    (m[0], c[1], m[1], o, hids[1]),
                    (o, m[1], c[2], m[2], hids[2]),
                    (m[3], o, m[2], c[3], hids[3]),
                ]
                for qa, qb, qc, qd, ctr in quads:
                    tris.extend(
                        [[qa, qb, ctr], [qb, qc, ctr], [qc, qd, ctr], [qd, qa, ctr]]
                    )
    nodes = np.vstack(pts)
    conn = np.asarray(tris, dtype=np.int64)
    mesh = FEMesh(nodes, [(element, conn)])

    # inherit side sets for nodes on the patch boundary
    for name, gset in grid.mesh.node_sets.items():
        shared = [g2l[int(g)] for g in gset if int(g) in g2l]
        if shared:
            mesh.node_sets[name] = np.asarray(sorted(shared), dtype=np.int64)
    mesh.validate_jacobians()
    return mesh


def local_interface_ids(mesh: FEMesh, trace: InterfaceTrace, global_nodes: np.ndarray):
    """Match every interface node to a local mesh node by coordinates.

    Returns the local node ids in trace order; raises ConformityError naming
    the first unmatched node.
    """
    tol = MATCH_REL_TOL * mesh.bbox_diagonal()
    tree = cKDTree(mesh.nodes)
    want = global_nodes[trace.node_indices]
    dist, idx = tree.query(want)
    if np.any(dist > tol):
        bad = int(np.argmax(dist > tol))
        raise ConformityError(
            f"interface node {int(trace.node_indices[bad])} at "
            f"{want[bad].tolist()} has no local counterpart within {tol:g}"
        )
    if len(set(idx.tolist())) != idx.size:
        raise ConformityError("two interface nodes matched the same local node")
    return idx.astype(np.int64)


# ---------------------------------------------------------------------------
# mesh text format
# ---------------------------------------------------------------------------

def write_mesh(mesh: FEMesh, path):
    """Plain text: header `nnodes nelems`, node lines `id x y`, element lines
    `id type n1 n2 ...`, then `set <name>` blocks with node indices."""
    lines = [f"{mesh.num_nodes} {mesh.num_elements}"]
    for i, (x, y) in enumerate(mesh.nodes):
        lines.append(f"{i} {x:.17g} {y:.17g}")
    eid = 0
    for etype, conn in mesh.blocks:
        for row in conn:
            lines.append(f"{eid} {etype} " + " ".join(str(int(n)) for n in row))
            eid += 1
    for name in sorted(mesh.node_sets):
        lines.append(f"set {name}")
        idx = mesh.node_sets[name]
        for lo in range(0, len(idx), 16):
            lines.append(" ".join(str(int(i)) for i in idx[lo : lo + 16]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_mesh(path) -> FEMesh:
    """Parse and validate a mesh text file written by :func:`write_mesh`."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines = [(k + 1, ln.strip()) for k, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise MeshParseError("empty mesh file")
    ln, head = lines[0]
    try:
        nnodes, nelems = (int(tok) for tok in head.split())
    except ValueError:
        raise MeshParseError("header must be `nnodes nelems`", ln) from None
    pos = 1
    nodes = np.empty((nnodes, 2))
    for i in range(nnodes):
        ln, text = lines[pos + i]
        toks = text.split()
        try:
            idx = int(toks[0])
            nodes[idx] = [float(toks[1]), float(toks[2])]
        except (ValueError, IndexError):
            raise MeshParseError("node line must be `id x y`", ln) from None
        if idx != i:
            raise MeshParseError(f"node ids must be consecutive, got {idx}", ln)
    pos += nnodes
    by_type = {}
    order = []
    for e in range(nelems):
        ln, text = lines[pos + e]
        toks = text.split()
        try:
            _, etype, conn = int(toks[0]), toks[1], [int(t) for t in toks[2:]]
        except (ValueError, IndexError):
            raise MeshParseError("element line must be `id type n1 n2 ...`", ln) from None
        try:
            want = elements.num_nodes(etype)
        except KeyError:
            raise MeshParseError(f"unknown element type {etype}", ln) from None
        if len(conn) != want:
            raise MeshParseError(f"{etype} needs {want} nodes, got {len(conn)}", ln)
        if min(conn) < 0 or max(conn) >= nnodes:
            raise MeshParseError("node index out of range", ln)
        if etype not in by_type:
            by_type[etype] = []
            order.append(etype)
        by_type[etype].append(conn)
    pos += nelems
    node_sets = {}
    current = None
    for ln, text in lines[pos:]:
        if text.startswith("set "):
            current = text[4:].strip()
            node_sets[current] = []
            continue
        if current is None:
            raise MeshParseError("expected `set <name>` block", ln)
        try:
            idx = [int(t) for t in text.split()]
        except ValueError:
            raise MeshParseError("node set entries must be integers", ln) from None
        if idx and (min(idx) < 0 or max(idx) >= nnodes):
            raise MeshParseError("node set index out of range", ln)
        node_sets[current].extend(idx)
    blocks = [(etype, np.asarray(by_type[etype], dtype=np.int64)) for etype in order]
    mesh = FEMesh(
        nodes, blocks, {k: np.asarray(v, dtype=np.int64) for k, v in node_sets.items()}
    )
    mesh.validate_jacobians()
    return mesh
