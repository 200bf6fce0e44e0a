"""Univariate and tensor-product B-spline/NURBS bases, geometries and
knot-insertion refinement.

Only open (clamped) knot vectors are supported.  Control points are numbered
lexicographically with direction 1 fastest, so 2D tensor operators are
``kron(op_dir2, op_dir1)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import _kernels
from .errors import DomainError, PatchError, RefinementError

# two knots closer than this fraction of the domain length are the same knot
KNOT_REL_TOL = 1e-12


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector: non-decreasing values and a polynomial degree."""

    values: np.ndarray
    degree: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        p = self.degree
        if p < 0:
            raise PatchError("degree must be non-negative")
        if vals.ndim != 1 or vals.size < 2 * (p + 1):
            raise PatchError(f"knot vector needs at least {2 * (p + 1)} entries")
        if np.any(np.diff(vals) < 0):
            raise PatchError("knot values must be non-decreasing")
        tol = self.knot_tol
        if np.any(np.abs(vals[: p + 1] - vals[0]) > tol) or np.any(
            np.abs(vals[-(p + 1) :] - vals[-1]) > tol
        ):
            raise PatchError("knot vector must be open (end multiplicity p+1)")
        if vals[p + 1] - vals[0] <= tol or vals[-1] - vals[-p - 2] <= tol:
            raise PatchError("end knot multiplicity exceeds p+1")
        for mult in self.interior_multiplicities().values():
            if mult > p:
                raise PatchError(f"interior knot multiplicity {mult} exceeds degree {p}")

    @property
    def num_basis(self):
        return self.values.size - self.degree - 1

    @property
    def domain(self):
        return float(self.values[0]), float(self.values[-1])

    @property
    def knot_tol(self):
        return KNOT_REL_TOL * (self.values[-1] - self.values[0])

    def breakpoints(self):
        """Distinct knot values (span boundaries), in increasing order."""
        uniq = [self.values[0]]
        for v in self.values[1:]:
            if v - uniq[-1] > self.knot_tol:
                uniq.append(v)
        return np.array(uniq)

    def interior_multiplicities(self):
        mults = {}
        tol = self.knot_tol
        lo, hi = self.domain
        for v in self.values:
            if v - lo <= tol or hi - v <= tol:
                continue
            for key in mults:
                if abs(key - v) <= tol:
                    mults[key] += 1
                    break
            else:
                mults[float(v)] = 1
        return mults

    @property
    def num_spans(self):
        return len(self.breakpoints()) - 1

    def contains(self, x):
        lo, hi = self.domain
        return lo - self.knot_tol <= x <= hi + self.knot_tol


def uniform_knot_vector(num_spans, degree, lo=0.0, hi=1.0):
    """Open knot vector with `num_spans` equal spans on [lo, hi]."""
    interior = np.linspace(lo, hi, num_spans + 1)[1:-1]
    vals = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    return KnotVector(vals, degree)


def eval_basis(kv: KnotVector, xi: float) -> np.ndarray:
    """All n basis values at xi (zeros outside the local support)."""
    if not kv.contains(xi):
        raise DomainError(f"xi={xi} outside knot domain {kv.domain}")
    return _kernels.basis_matrix(kv.values, kv.degree, np.array([xi]))[0]


def eval_basis_many(kv: KnotVector, xs) -> np.ndarray:
    """Basis values at many parameters, shape (len(xs), n)."""
    xs = np.asarray(xs, dtype=np.float64)
    lo, hi = kv.domain
    if xs.size and (xs.min() < lo - kv.knot_tol or xs.max() > hi + kv.knot_tol):
        raise DomainError("parameter outside knot domain")
    return _kernels.basis_matrix(kv.values, kv.degree, xs)


def eval_basis_derivs_many(kv: KnotVector, xs):
    """Basis values and first derivatives at many parameters."""
    xs = np.asarray(xs, dtype=np.float64)
    return _kernels.basis_deriv_matrix(kv.values, kv.degree, xs)


@dataclass(frozen=True)
class SplinePatch:
    """Tensor-product B-spline/NURBS patch (1D curve or 2D surface).

    control_points has shape (n_cp, phys_dim) with n_cp the product of the
    per-direction basis counts; weights are all 1.0 for a plain B-spline.
    """

    knot_vectors: tuple
    control_points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        kvs = tuple(self.knot_vectors)
        object.__setattr__(self, "knot_vectors", kvs)
        cp = np.asarray(self.control_points, dtype=np.float64)
        if cp.ndim != 2:
            raise PatchError("control_points must be a 2D array (n_cp, phys_dim)")
        object.__setattr__(self, "control_points", cp)
        n_expected = int(np.prod([kv.num_basis for kv in kvs]))
        if cp.shape[0] != n_expected:
            raise PatchError(
                f"expected {n_expected} control points, got {cp.shape[0]}"
            )
        w = self.weights
        if w is None:
            w = np.ones(n_expected)
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (n_expected,):
            raise PatchError("weights must have one entry per control point")
        if np.any(w <= 0):
            raise PatchError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)

    @property
    def ndim(self):
        return len(self.knot_vectors)

    @property
    def num_basis(self):
        return self.control_points.shape[0]

    @property
    def basis_shape(self):
        return tuple(kv.num_basis for kv in self.knot_vectors)

    @property
    def degrees(self):
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def is_rational(self):
        return not np.allclose(self.weights, 1.0, rtol=0.0, atol=0.0)

    def spans(self):
        """Number of knot spans per direction."""
        return tuple(kv.num_spans for kv in self.knot_vectors)


def _as_points(xi, ndim):
    pts = np.asarray(xi, dtype=np.float64)
    if pts.ndim == 0:
        pts = pts[None]
    if ndim == 1:
        if pts.ndim == 1:
            pts = pts[:, None]
    elif pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] != ndim:
        raise DomainError(f"expected {ndim}-dimensional parametric points")
    return pts


def _tensor_bspline_values(patch: SplinePatch, pts: np.ndarray) -> np.ndarray:
    mats = [
        eval_basis_many(kv, pts[:, d]) for d, kv in enumerate(patch.knot_vectors)
    ]
    if patch.ndim == 1:
        return mats[0]
    # direction 1 fastest: N[(i + j*n1)] = N1[i] * N2[j]
    return np.einsum("ki,kj->kji", mats[0], mats[1]).reshape(pts.shape[0], -1)


def eval_nurbs_basis_many(patch: SplinePatch, pts) -> np.ndarray:
    """Rational basis values R_i = w_i N_i / sum_j w_j N_j, one row per point."""
    pts = _as_points(pts, patch.ndim)
    bs = _tensor_bspline_values(patch, pts)
    num = bs * patch.weights[None, :]
    den = num.sum(axis=1)
    return num / den[:, None]


def eval_nurbs_basis(patch: SplinePatch, xi) -> np.ndarray:
    """Rational basis values at a single parametric point."""
    return eval_nurbs_basis_many(patch, _as_points(xi, patch.ndim))[0]


def eval_geometry_many(patch: SplinePatch, pts) -> np.ndarray:
    """Physical image of many parametric points, shape (npts, phys_dim)."""
    return eval_nurbs_basis_many(patch, pts) @ patch.control_points


def eval_geometry(patch: SplinePatch, xi) -> np.ndarray:
    """Physical image of a single parametric point."""
    return eval_geometry_many(patch, _as_points(xi, patch.ndim))[0]


@dataclass(frozen=True)
class RefinementOperator:
    """Sparse operator D with R_coarse(xi) = D @ R_fine(xi).

    Fine control points are recovered as D.T @ x_coarse (in homogeneous
    coordinates for rational patches), so the geometry is unchanged.
    """

    matrix: sps.csr_matrix
    coarse_basis_count: int = field(default=0)
    fine_basis_count: int = field(default=0)

    def __post_init__(self):
        mat = sps.csr_matrix(self.matrix)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "coarse_basis_count", mat.shape[0])
        object.__setattr__(self, "fine_basis_count", mat.shape[1])


def _insert_one_knot(values, degree, u):
    """Boehm single-knot insertion: new knot array and the (n, n+1) operator."""
    n = values.size - degree - 1
    # span via bisection on the open vector
    span = int(_kernels._find_span(values, degree, u))
    alpha = np.zeros(n + 1)
    alpha[: span - degree + 1] = 1.0
    js = np.arange(span - degree + 1, span + 1)
    alpha[js] = (u - values[js]) / (values[js + degree] - values[js])
    rows = np.repeat(np.arange(n), 2)
    cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
    data = np.stack([alpha[:-1], 1.0 - alpha[1:]], axis=1).ravel()
    op = sps.csr_matrix((data, (rows, cols)), shape=(n, n + 1))
    new_values = np.insert(values, span + 1, u)
    return new_values, op


def knot_insertion_operator(kv: KnotVector, new_knots):
    """Insert knots (with multiplicity) and build the refinement operator."""
    new_knots = np.sort(np.asarray(new_knots, dtype=np.float64))
    lo, hi = kv.domain
    tol = kv.knot_tol
    if new_knots.size and (
        new_knots[0] <= lo + tol or new_knots[-1] >= hi - tol
    ):
        raise RefinementError("new knots must lie strictly inside the domain")
    mults = kv.interior_multiplicities()
    for u in new_knots:
        cur = 0
        for key, m in mults.items():
            if abs(key - u) <= tol:
                cur = m
                break
        add = int(np.sum(np.abs(new_knots - u) <= tol))
        if cur + add > kv.degree:
            raise RefinementError(
                f"multiplicity of knot {u} would exceed the degree {kv.degree}"
            )
    values = kv.values
    op = sps.identity(kv.num_basis, format="csr")
    for u in new_knots:
        values, step = _insert_one_knot(values, kv.degree, float(u))
        op = op @ step
    fine = KnotVector(values, kv.degree)
    return fine, RefinementOperator(op)


def refine_patch(patch: SplinePatch, new_knots_per_direction):
    """Knot-insert per direction; returns the refined patch and the tensor
    refinement operator (coarse functions = D @ fine functions)."""
    if len(new_knots_per_direction) != patch.ndim:
        raise RefinementError("one knot list per parametric direction required")
    fine_kvs = []
    ops = []
    for kv, knots in zip(patch.knot_vectors, new_knots_per_direction):
        fine, op = knot_insertion_operator(kv, knots)
        fine_kvs.append(fine)
        ops.append(op.matrix)
    if patch.ndim == 1:
        dmat = ops[0]
    else:
        dmat = sps.kron(ops[1], ops[0], format="csr")
    if patch.is_rational:
        # homogeneous refinement keeps the rational geometry exact
        wc = patch.weights
        wx = dmat.T @ (patch.control_points * wc[:, None])
        wf = dmat.T @ wc
        fine_patch = SplinePatch(tuple(fine_kvs), wx / wf[:, None], wf)
    else:
        fine_patch = SplinePatch(tuple(fine_kvs), dmat.T @ patch.control_points)
    return fine_patch, RefinementOperator(dmat)


def subdivision_knots(kv: KnotVector, factor: int):
    """New knots that split every span of kv into `factor` equal spans."""
    if factor < 1:
        raise RefinementError("subdivision factor must be >= 1")
    brk = kv.breakpoints()
    out = []
    for a, b in zip(brk[:-1], brk[1:]):
        for k in range(1, factor):
            out.append(a + (b - a) * k / factor)
    return np.array(out)


def refine_to_spans(patch: SplinePatch, spans_per_direction):
    """Uniformly subdivide each direction up to the requested span count."""
    knots = []
    for kv, target in zip(patch.knot_vectors, spans_per_direction):
        cur = kv.num_spans
        if target % cur != 0:
            raise RefinementError(
                f"target span count {target} is not a multiple of {cur}"
            )
        knots.append(subdivision_knots(kv, target // cur))
    return refine_patch(patch, knots)


# ---------------------------------------------------------------------------
# Canonical geometries used by the bundled example problems
# ---------------------------------------------------------------------------

def quarter_annulus_patch(r_in=5.0, r_out=10.0):
    """Exact quarter annulus (single quadratic NURBS element).

    Direction 1 sweeps the 90-degree arc from the +y axis down to the +x
    axis (so the parametric map is positively oriented), direction 2 goes
    from the inner to the outer radius.
    """
    kv = uniform_knot_vector(1, 2)
    s = np.sqrt(2.0) / 2.0
    arc = np.array([[0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    arc_w = np.array([1.0, s, 1.0])
    radii = np.array([r_in, 0.5 * (r_in + r_out), r_out])
    cps = np.array([r * q for r in radii for q in arc])
    wts = np.array([w for _ in radii for w in arc_w])
    return SplinePatch((kv, kv), cps, wts)


def square_patch(side=10.0, degree=2):
    """Unit-span square [0, side]^2 of the given degree (plain B-spline)."""
    kv = uniform_knot_vector(1, degree)
    grev = np.linspace(0.0, side, kv.num_basis)
    cps = np.array([[x, y] for y in grev for x in grev])
    return SplinePatch((kv, kv), cps)


def line_patch(points, degree=2):
    """1D curve patch through the given control points."""
    points = np.asarray(points, dtype=np.float64)
    kv = uniform_knot_vector(points.shape[0] - degree, degree)
    return SplinePatch((kv,), points)
