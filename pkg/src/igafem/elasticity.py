"""Plane-stress linear elasticity: operator assembly, consistent loads,
Dirichlet elimination and the Galerkin projection onto the spline basis.

Stiffness and load operators are plain ``scipy.sparse`` matrices / numpy
vectors with 2 DOF per node (or per control point after projection).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import _kernels, elements
from .errors import MaterialError, MeshError
from .extraction import BridgeOperator, expand_dofs
from .mesh import FEMesh

COMPONENTS = {"x": 0, "y": 1, 0: 0, 1: 1}


@dataclass(frozen=True)
class Material:
    """Isotropic plane-stress material (MPa, mm)."""

    young_modulus: float
    poisson_ratio: float
    thickness: float = 1.0

    def __post_init__(self):
        if self.young_modulus <= 0:
            raise MaterialError("Young modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise MaterialError("Poisson ratio must lie in (-1, 0.5)")
        if self.thickness <= 0:
            raise MaterialError("thickness must be positive")

    def d_matrix(self):
        e, nu = self.young_modulus, self.poisson_ratio
        c = e / (1.0 - nu * nu)
        return c * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1 - nu)]])


@dataclass
class LoadCase:
    """Dirichlet values on node sets and tractions on edge-element sets.

    dirichlet entries are (set_name, component, value); neumann entries are
    (edge_set_name, (tx, ty)) for a constant traction vector or
    (edge_set_name, ("pressure", p)) for a follower-free normal traction
    p * n, with n the edge tangent rotated by -90 degrees.  Values scale
    linearly with the load factor.
    """

    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)


def element_dofs(conn):
    """(ne, 2*nen) DOF indices for a connectivity block."""
    ne, nen = conn.shape
    out = np.empty((ne, 2 * nen), dtype=np.int64)
    out[:, 0::2] = 2 * conn
    out[:, 1::2] = 2 * conn + 1
    return out


def assemble_stiffness(mesh: FEMesh, mat: Material, element_ids=None):
    """Symmetric plane-stress stiffness; `element_ids` restricts the
    assembly to a subset (zero-padded to the full DOF dimension)."""
    ndof = mesh.num_dofs
    rows, cols, data = [], [], []
    if element_ids is None:
        groups = [(b, None) for b in range(len(mesh.blocks))]
    else:
        groups = mesh.split_ids_by_block(element_ids)
    dmat = mat.d_matrix()
    for b, sel in groups:
        etype, conn = mesh.blocks[b]
        if etype not in elements.BULK_TYPES:
            continue
        if sel is not None:
            conn = conn[sel]
        if conn.shape[0] == 0:
            continue
        pts, wts = elements.quadrature(etype)
        dshp = elements.shape_gradients(etype, pts)
        ke = _kernels.element_stiffness_batch(
            mesh.nodes[conn], dshp, wts, dmat, mat.thickness
        )
        edof = element_dofs(conn).astype(np.int32)
        nd = edof.shape[1]
        rows.append(np.repeat(edof, nd, axis=1).ravel())
        cols.append(np.tile(edof, (1, nd)).reshape(-1))
        data.append(ke.reshape(-1))
        del ke
    if not rows:
        return sps.csr_matrix((ndof, ndof))
    kmat = sps.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    ).tocsr()
    return 0.5 * (kmat + kmat.T)


def assemble_loads(mesh: FEMesh, load: LoadCase, thickness=1.0, element_ids=None):
    """Consistent nodal forces from edge tractions (edge-rule quadrature)."""
    f = np.zeros(mesh.num_dofs)
    allowed = None
    if element_ids is not None:
        allowed = set(int(i) for i in np.asarray(element_ids).ravel())
    offs = mesh.block_offsets()
    for set_name, traction in load.neumann:
        if set_name not in mesh.element_sets:
            raise MeshError(f"unknown element set '{set_name}'")
        ids = mesh.element_sets[set_name]
        if allowed is not None:
            ids = np.array([i for i in ids if int(i) in allowed], dtype=np.int64)
        pressure = None
        if isinstance(traction, (tuple, list)) and traction and traction[0] == "pressure":
            pressure = float(traction[1])
        else:
            tvec = np.asarray(traction, dtype=np.float64)
        for b, sel in mesh.split_ids_by_block(ids):
            etype, conn = mesh.blocks[b]
            if etype not in elements.EDGE_TYPES:
                raise MeshError(f"set '{set_name}' contains non-edge elements")
            conn = conn[sel]
            pts, wts = elements.quadrature(etype)
            sf = elements.shape_functions(etype, pts)
            dshp = elements.shape_gradients(etype, pts)[:, :, 0]
            coords = mesh.nodes[conn]
            tang = np.einsum("ga,eai->egi", dshp, coords)
            jac = np.linalg.norm(tang, axis=2)
            if pressure is None:
                fe = np.einsum("g,eg,ga,i->eai", wts, jac, sf, tvec) * thickness
            else:
                nrm = np.stack([tang[..., 1], -tang[..., 0]], axis=-1) / jac[..., None]
                fe = pressure * thickness * np.einsum(
                    "g,eg,ga,egi->eai", wts, jac, sf, nrm
                )
            np.add.at(f, 2 * conn, fe[:, :, 0])
            np.add.at(f, 2 * conn + 1, fe[:, :, 1])
    return f


def dirichlet_dofs(load: LoadCase, node_sets, num_nodes):
    """Resolve Dirichlet specs against node sets: (dof indices, unit values).

    Values are for load factor 1; scale at solve time.
    """
    table = {}
    for set_name, comp, value in load.dirichlet:
        if set_name not in node_sets:
            raise MeshError(f"unknown node set '{set_name}'")
        c = COMPONENTS[comp]
        for n in node_sets[set_name]:
            dof = 2 * int(n) + c
            if dof in table and abs(table[dof] - value) > 1e-14:
                raise MeshError(f"conflicting Dirichlet values on dof {dof}")
            table[dof] = float(value)
    idx = np.array(sorted(table), dtype=np.int64)
    vals = np.array([table[i] for i in idx])
    return idx, vals


class ConstrainedOperator:
    """Stiffness with eliminated Dirichlet DOF, factorized once.

    Repeated solves reuse the factorization; only the right-hand side (and
    the load factor scaling the prescribed values) changes.
    """

    def __init__(self, kmat, fixed_idx, fixed_vals):
        kmat = sps.csr_matrix(kmat)
        ndof = kmat.shape[0]
        self.kmat = kmat
        self.fixed_idx = np.asarray(fixed_idx, dtype=np.int64)
        self.fixed_vals = np.asarray(fixed_vals, dtype=np.float64)
        mask = np.ones(ndof, dtype=bool)
        mask[self.fixed_idx] = False
        self.free_idx = np.nonzero(mask)[0]
        if self.free_idx.size == 0:
            raise MeshError("all DOF are prescribed")
        self.k_ff = kmat[self.free_idx][:, self.free_idx].tocsc()
        self.k_fc = kmat[self.free_idx][:, self.fixed_idx].tocsr()
        self.factor = spla.splu(self.k_ff, permc_spec="MMD_AT_PLUS_A")
        self.n_factorizations = 1

    def solve(self, f, load_factor=1.0):
        u = np.zeros(self.kmat.shape[0])
        u[self.fixed_idx] = load_factor * self.fixed_vals
        rhs = f[self.free_idx] - self.k_fc @ u[self.fixed_idx]
        u[self.free_idx] = self.factor.solve(rhs)
        return u

    def reactions(self, u, f):
        """Residual K u - f at the prescribed DOF."""
        r = self.kmat @ u - f
        return r[self.fixed_idx]


def project_operator(bridge: BridgeOperator, k_f, f_f):
    """Galerkin reduction K_c = D K_f D^T, f_c = D f_f (2 DOF per node)."""
    d2 = expand_dofs(bridge.matrix)
    if d2.shape[1] != k_f.shape[0]:
        raise ValueError(
            f"bridge maps {d2.shape[1]} DOF, stiffness has {k_f.shape[0]}"
        )
    k_c = (d2 @ k_f @ d2.T).tocsr()
    k_c = 0.5 * (k_c + k_c.T)
    return k_c, d2 @ f_f


def prolong_solution(bridge: BridgeOperator, u_c):
    """Back-conversion of spline DOF to FE nodal displacements u = D^T u_c."""
    d2 = expand_dofs(bridge.matrix)
    if d2.shape[0] != u_c.shape[0]:
        raise ValueError("coarse vector does not match the bridge")
    return d2.T @ u_c


def strain_energy(kmat, u):
    """E = 1/2 u^T K u."""
    return 0.5 * float(u @ (kmat @ u))


def relative_energy_error(e_h, e_ref):
    """|E_ref - E_h| / E_ref."""
    if e_ref <= 0:
        raise ValueError("reference energy must be positive")
    return abs(e_ref - e_h) / e_ref


def gauss_stresses(mesh: FEMesh, mat: Material, u, element_ids=None):
    """Stress (sxx, syy, sxy) at the quadrature points of each bulk element.

    Returns a list of (block_index, rows, stresses (ne, ng, 3)).
    """
    dmat = mat.d_matrix()
    out = []
    if element_ids is None:
        groups = [(b, None) for b in range(len(mesh.blocks))]
    else:
        groups = mesh.split_ids_by_block(element_ids)
    for b, sel in groups:
        etype, conn = mesh.blocks[b]
        if etype not in elements.BULK_TYPES:
            continue
        if sel is None:
            sel = np.arange(conn.shape[0])
        conn = conn[sel]
        pts, _ = elements.quadrature(etype)
        dshp = elements.shape_gradients(etype, pts)
        coords = mesh.nodes[conn]
        jac = np.einsum("eai,gaj->egij", coords, dshp)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        dndx = np.einsum("gaj,egji->egai", dshp, inv)
        ue = u[element_dofs(conn)].reshape(conn.shape[0], conn.shape[1], 2)
        eps = np.empty((conn.shape[0], pts.shape[0], 3))
        eps[..., 0] = np.einsum("ega,ea->eg", dndx[..., 0], ue[..., 0])
        eps[..., 1] = np.einsum("ega,ea->eg", dndx[..., 1], ue[..., 1])
        eps[..., 2] = np.einsum("ega,ea->eg", dndx[..., 1], ue[..., 0]) + np.einsum(
            "ega,ea->eg", dndx[..., 0], ue[..., 1]
        )
        out.append((b, sel, np.einsum("ij,egj->egi", dmat, eps)))
    return out


def nodal_stress(mesh: FEMesh, mat: Material, u, element_ids=None):
    """Stresses extrapolated from quadrature points and averaged at nodes."""
    acc = np.zeros((mesh.num_nodes, 3))
    cnt = np.zeros(mesh.num_nodes)
    for b, sel, sig in gauss_stresses(mesh, mat, u, element_ids):
        etype, conn = mesh.blocks[b]
        conn = conn[sel]
        emat = elements.extrapolation_matrix(etype)
        nodal = np.einsum("ag,egi->eai", emat, sig)
        np.add.at(acc, conn.ravel(), nodal.reshape(-1, 3))
        np.add.at(cnt, conn.ravel(), 1.0)
    cnt[cnt == 0] = 1.0
    return acc / cnt[:, None]
