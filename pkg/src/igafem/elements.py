"""Reference elements: shape functions, quadrature rules and stress
extrapolation operators for the supported 2D plane-stress element types.

Node ordering follows the usual counterclockwise corner-then-midside
convention (matching the VTK cell orderings used for output).
"""

import numpy as np

BULK_TYPES = ("Q9", "Q4", "T6", "T3")
EDGE_TYPES = ("edge2", "edge3")

# reference node coordinates
_REF_NODES = {
    "Q9": np.array(
        [
            [-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0],
            [0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0],
            [0.0, 0.0],
        ]
    ),
    "Q4": np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
    "T6": np.array(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
    ),
    "T3": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "edge2": np.array([[-1.0], [1.0]]),
    "edge3": np.array([[-1.0], [1.0], [0.0]]),
}


def num_nodes(etype):
    return _REF_NODES[etype].shape[0]


def ref_nodes(etype):
    return _REF_NODES[etype]


def _lag1d(c, x):
    # quadratic Lagrange polynomial attached to node c in {-1, 0, 1}
    if c == -1.0:
        return 0.5 * x * (x - 1.0)
    if c == 0.0:
        return 1.0 - x * x
    return 0.5 * x * (x + 1.0)


def _dlag1d(c, x):
    if c == -1.0:
        return x - 0.5
    if c == 0.0:
        return -2.0 * x
    return x + 0.5


def shape_functions(etype, pts):
    """Shape function values, shape (npts, nen)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[0]
    if etype == "Q9":
        out = np.empty((n, 9))
        for a, (cx, cy) in enumerate(_REF_NODES["Q9"]):
            out[:, a] = _lag1d(cx, pts[:, 0]) * _lag1d(cy, pts[:, 1])
        return out
    if etype == "Q4":
        out = np.empty((n, 4))
        for a, (cx, cy) in enumerate(_REF_NODES["Q4"]):
            out[:, a] = 0.25 * (1 + cx * pts[:, 0]) * (1 + cy * pts[:, 1])
        return out
    if etype == "T6":
        l1 = 1.0 - pts[:, 0] - pts[:, 1]
        l2 = pts[:, 0]
        l3 = pts[:, 1]
        return np.column_stack(
            [
                l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
                4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1,
            ]
        )
    if etype == "T3":
        return np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    if etype == "edge2":
        x = pts[:, 0]
        return np.column_stack([0.5 * (1 - x), 0.5 * (1 + x)])
    if etype == "edge3":
        x = pts[:, 0]
        return np.column_stack(
            [0.5 * x * (x - 1), 0.5 * x * (x + 1), 1.0 - x * x]
        )
    raise KeyError(etype)


def shape_gradients(etype, pts):
    """Reference-coordinate gradients: (npts, nen, 2) for bulk elements,
    (npts, nen, 1) for edges."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[0]
    if etype == "Q9":
        out = np.empty((n, 9, 2))
        for a, (cx, cy) in enumerate(_REF_NODES["Q9"]):
            out[:, a, 0] = _dlag1d(cx, pts[:, 0]) * _lag1d(cy, pts[:, 1])
            out[:, a, 1] = _lag1d(cx, pts[:, 0]) * _dlag1d(cy, pts[:, 1])
        return out
    if etype == "Q4":
        out = np.empty((n, 4, 2))
        for a, (cx, cy) in enumerate(_REF_NODES["Q4"]):
            out[:, a, 0] = 0.25 * cx * (1 + cy * pts[:, 1])
            out[:, a, 1] = 0.25 * cy * (1 + cx * pts[:, 0])
        return out
    if etype == "T6":
        l1 = 1.0 - pts[:, 0] - pts[:, 1]
        l2 = pts[:, 0]
        l3 = pts[:, 1]
        out = np.empty((n, 6, 2))
        out[:, 0, 0] = 1 - 4 * l1
        out[:, 0, 1] = 1 - 4 * l1
        out[:, 1, 0] = 4 * l2 - 1
        out[:, 1, 1] = 0.0
        out[:, 2, 0] = 0.0
        out[:, 2, 1] = 4 * l3 - 1
        out[:, 3, 0] = 4 * (l1 - l2)
        out[:, 3, 1] = -4 * l2
        out[:, 4, 0] = 4 * l3
        out[:, 4, 1] = 4 * l2
        out[:, 5, 0] = -4 * l3
        out[:, 5, 1] = 4 * (l1 - l3)
        return out
    if etype == "T3":
        out = np.empty((n, 3, 2))
        out[:, 0] = [-1.0, -1.0]
        out[:, 1] = [1.0, 0.0]
        out[:, 2] = [0.0, 1.0]
        return out
    if etype == "edge2":
        out = np.empty((n, 2, 1))
        out[:, 0, 0] = -0.5
        out[:, 1, 0] = 0.5
        return out
    if etype == "edge3":
        x = pts[:, 0]
        out = np.empty((n, 3, 1))
        out[:, 0, 0] = x - 0.5
        out[:, 1, 0] = x + 0.5
        out[:, 2, 0] = -2.0 * x
        return out
    raise KeyError(etype)


def quadrature(etype):
    """Stiffness quadrature: 3x3 Gauss (Q9), 2x2 (Q4), 3 points (T6),
    1 point (T3), 3- and 2-point Gauss for the edges."""
    if etype == "Q9":
        g = np.sqrt(0.6)
        x1 = np.array([-g, 0.0, g])
        w1 = np.array([5.0, 8.0, 5.0]) / 9.0
        pts = np.array([[a, b] for b in x1 for a in x1])
        wts = np.array([wa * wb for wb in w1 for wa in w1])
        return pts, wts
    if etype == "Q4":
        g = 1.0 / np.sqrt(3.0)
        pts = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
        return pts, np.ones(4)
    if etype == "T6":
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return pts, np.full(3, 1 / 6)
    if etype == "T3":
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    if etype == "edge3":
        g = np.sqrt(0.6)
        return np.array([[-g], [0.0], [g]]), np.array([5.0, 8.0, 5.0]) / 9.0
    if etype == "edge2":
        g = 1.0 / np.sqrt(3.0)
        return np.array([[-g], [g]]), np.ones(2)
    raise KeyError(etype)


def extrapolation_matrix(etype):
    """Map quadrature-point values to nodal values (stress recovery)."""
    pts, _ = quadrature(etype)
    nodes = _REF_NODES[etype]
    if etype in ("Q9", "Q4"):
        # polynomial through the Gauss grid evaluated at the nodes
        deg = 2 if etype == "Q9" else 1
        xg = np.unique(pts[:, 0])

        def lag(xs, k, x):
            v = 1.0
            for m, xm in enumerate(xs):
                if m != k:
                    v = v * (x - xm) / (xs[k] - xm)
            return v

        ng1 = deg + 1
        out = np.empty((nodes.shape[0], ng1 * ng1))
        for a, (nx, ny) in enumerate(nodes):
            for j in range(ng1):
                for i in range(ng1):
                    out[a, j * ng1 + i] = lag(xg, i, nx) * lag(xg, j, ny)
        return out
    if etype == "T6":
        # linear fit through the 3 interior points
        vg = np.column_stack([np.ones(3), pts])
        vn = np.column_stack([np.ones(6), nodes])
        return vn @ np.linalg.inv(vg)
    if etype == "T3":
        return np.ones((3, 1))
    raise KeyError(etype)
