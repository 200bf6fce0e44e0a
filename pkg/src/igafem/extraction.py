"""Spline-to-Lagrange extraction: the bridge between a smooth spline basis and
an equivalent C0 finite-element basis on the same breakpoints.

The bridge matrix D satisfies R(xi) = D @ L(xi) exactly for polynomial
B-splines; for rational patches the relation holds after replacing the
rational nodal functions by plain polynomials, which leaves the FE nodes on
the exact geometry but introduces a small geometric error between nodes.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import _kernels
from .errors import PatchError
from .splines import (
    KnotVector,
    RefinementOperator,
    SplinePatch,
    knot_insertion_operator,
)

FINE_BRIDGE = "fine_bridge"
REFINEMENT = "refinement"
COMPOSED = "composed"


@dataclass(frozen=True)
class BridgeOperator:
    """Sparse operator with rows = spline functions, columns = FE nodes."""

    matrix: sps.csr_matrix
    kind: str = FINE_BRIDGE
    node_params: tuple = None  # per-direction Lagrange node parameters

    def __post_init__(self):
        object.__setattr__(self, "matrix", sps.csr_matrix(self.matrix))
        if self.node_params is not None:
            object.__setattr__(
                self, "node_params", tuple(np.asarray(p) for p in self.node_params)
            )

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nodes_shape(self):
        return tuple(p.size for p in self.node_params)


def bezier_extraction(kv: KnotVector):
    """Raise every interior knot to multiplicity p.

    Returns the (spline -> C0 Bernstein) operator together with the C0 knot
    vector it maps onto.
    """
    to_insert = []
    for value, mult in kv.interior_multiplicities().items():
        to_insert.extend([value] * (kv.degree - mult))
    c0_kv, op = knot_insertion_operator(kv, to_insert)
    return op.matrix, c0_kv


def lagrange_nodes_1d(kv: KnotVector):
    """Parametric Lagrange node abscissae: p+1 uniform nodes per span,
    shared at span boundaries."""
    brk = kv.breakpoints()
    p = kv.degree
    chunks = [np.linspace(a, b, p + 1)[:-1] for a, b in zip(brk[:-1], brk[1:])]
    chunks.append(np.array([brk[-1]]))
    return np.concatenate(chunks)


def lagrange_extraction_1d(kv: KnotVector):
    """Univariate bridge: Bezier extraction composed with the
    Bernstein-to-Lagrange change of basis (collocation at the nodes)."""
    cmat, c0_kv = bezier_extraction(kv)
    nodes = lagrange_nodes_1d(kv)
    # nodal collocation of the C0 basis: A[j, i] = B_i(node_j)
    amat = _kernels.basis_matrix(c0_kv.values, kv.degree, nodes)
    emat = sps.csr_matrix(cmat @ sps.csr_matrix(amat.T))
    emat.data[np.abs(emat.data) < 1e-15] = 0.0
    emat.eliminate_zeros()
    return emat, nodes


def lagrange_extraction(patch: SplinePatch) -> BridgeOperator:
    """Bridge operator D^FE for a 1D or 2D patch (Eq. R = D L).

    For rational patches the polynomial tensor operator E is rescaled to
    D = diag(w) E diag(1/wbar) with wbar the weight function sampled at the
    nodes, so every column still sums to one.
    """
    mats = []
    params = []
    for kv in patch.knot_vectors:
        emat, nodes = lagrange_extraction_1d(kv)
        mats.append(emat)
        params.append(nodes)
    if patch.ndim == 1:
        emat = mats[0]
    else:
        emat = sps.kron(mats[1], mats[0], format="csr")
    if patch.is_rational:
        wbar = emat.T @ patch.weights
        emat = sps.diags(patch.weights) @ emat @ sps.diags(1.0 / wbar)
    return BridgeOperator(emat, FINE_BRIDGE, tuple(params))


def fe_nodes(patch_f: SplinePatch, bridge: BridgeOperator) -> np.ndarray:
    """Physical FE node coordinates x^FE = D^T x^IG (they interpolate the
    geometry at the Lagrange abscissae)."""
    if bridge.shape[0] != patch_f.num_basis:
        raise ValueError(
            f"bridge has {bridge.shape[0]} rows, patch has {patch_f.num_basis} functions"
        )
    return bridge.matrix.T @ patch_f.control_points


def compose_bridge(
    refine: RefinementOperator,
    bridge: BridgeOperator,
    coarse_weights=None,
    fine_weights=None,
) -> BridgeOperator:
    """Compose a refinement operator with a fine bridge: D = D_cf @ D^FE_f.

    For rational patches pass the coarse and fine weight vectors so the
    refinement part is rescaled to act on the rational bases.
    """
    dmat = refine.matrix
    if dmat.shape[1] != bridge.shape[0]:
        raise ValueError(
            f"cannot compose {dmat.shape} refinement with {bridge.shape} bridge"
        )
    if coarse_weights is not None:
        dmat = sps.diags(coarse_weights) @ dmat @ sps.diags(1.0 / np.asarray(fine_weights))
    out = sps.csr_matrix(dmat @ bridge.matrix)
    out.data[np.abs(out.data) < 1e-15] = 0.0
    out.eliminate_zeros()
    return BridgeOperator(out, COMPOSED, bridge.node_params)


def identity_bridge(n_nodes, node_params=None) -> BridgeOperator:
    """Trivial bridge for a purely FE global model."""
    return BridgeOperator(sps.identity(n_nodes, format="csr"), FINE_BRIDGE, node_params)


def expand_dofs(matrix, ndof=2):
    """Expand a nodal operator to act on vector DOF (ndof per node)."""
    return sps.kron(sps.csr_matrix(matrix), sps.identity(ndof), format="csr")
