"""Low-level numeric kernels.

The hot inner loops (B-spline basis tabulation and batched element stiffness
integration) exist in two versions: a numba ``@njit`` one and a vectorized
pure-numpy one.  The active version is chosen at import time; set the
environment variable ``IGAFEM_PURE_NUMPY=1`` to force the numpy path (used by
``benchmarks/bench_kernels.py`` to compare both).
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAVE_NUMBA and os.environ.get("IGAFEM_PURE_NUMPY", "0") != "1"


# ---------------------------------------------------------------------------
# B-spline basis tabulation
# ---------------------------------------------------------------------------

@njit(cache=True)
def _find_span(knots, degree, x):
    # index k with knots[k] <= x < knots[k+1]; right end maps to the last span
    n = knots.shape[0] - degree - 1
    if x >= knots[n]:
        return n - 1
    if x <= knots[degree]:
        return degree
    lo = degree
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


@njit(cache=True)
def _basis_row(knots, degree, span, x, out):
    # Cox-de Boor recursion for the degree+1 functions alive on the span
    left = np.empty(degree + 1)
    right = np.empty(degree + 1)
    out[0] = 1.0
    for j in range(1, degree + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            temp = out[r] / (right[r + 1] + left[j - r])
            out[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        out[j] = saved


@njit(cache=True)
def _basis_matrix_numba(knots, degree, xs):
    npts = xs.shape[0]
    nbf = knots.shape[0] - degree - 1
    out = np.zeros((npts, nbf))
    row = np.empty(degree + 1)
    for i in range(npts):
        span = _find_span(knots, degree, xs[i])
        _basis_row(knots, degree, span, xs[i], row)
        for j in range(degree + 1):
            out[i, span - degree + j] = row[j]
    return out


def _basis_matrix_numpy(knots, degree, xs):
    npts = xs.shape[0]
    nbf = knots.shape[0] - degree - 1
    spans = np.searchsorted(knots, xs, side="right") - 1
    np.clip(spans, degree, nbf - 1, out=spans)
    vals = np.ones((npts, 1))
    left = np.empty((npts, degree + 1))
    right = np.empty((npts, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = xs - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - xs
        nxt = np.empty((npts, j + 1))
        saved = np.zeros(npts)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            nxt[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        nxt[:, j] = saved
        vals = nxt
    out = np.zeros((npts, nbf))
    cols = spans[:, None] - degree + np.arange(degree + 1)[None, :]
    out[np.arange(npts)[:, None], cols] = vals
    return out


def basis_matrix(knots, degree, xs):
    """Dense matrix of all basis values, shape (len(xs), n_basis)."""
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if USE_NUMBA:
        return _basis_matrix_numba(knots, degree, xs)
    return _basis_matrix_numpy(knots, degree, xs)


def basis_deriv_matrix(knots, degree, xs):
    """Basis values and first derivatives at xs, two (len(xs), n) arrays.

    Evaluation-only helper (oracle tests, direct spline quadrature); not a
    hot path, so a single plain implementation is kept.
    """
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    npts = xs.shape[0]
    nbf = knots.shape[0] - degree - 1
    vals = np.zeros((npts, nbf))
    ders = np.zeros((npts, nbf))
    row = np.empty(degree + 1)
    rlow = np.empty(degree)
    for i in range(npts):
        span = int(_find_span(knots, degree, xs[i]))
        _basis_row(knots, degree, span, xs[i], row)
        vals[i, span - degree : span + 1] = row
        if degree == 0:
            continue
        _basis_row(knots, degree - 1, span, xs[i], rlow)
        for j in range(degree + 1):
            k = span - degree + j
            d = 0.0
            den1 = knots[k + degree] - knots[k]
            if den1 > 0.0 and j > 0:
                d += degree * rlow[j - 1] / den1
            den2 = knots[k + degree + 1] - knots[k + 1]
            if den2 > 0.0 and j < degree:
                d -= degree * rlow[j] / den2
            ders[i, k] = d
    return vals, ders


# ---------------------------------------------------------------------------
# Batched plane-stress element stiffness
# ---------------------------------------------------------------------------

@njit(cache=True)
def _element_stiffness_numba(coords, dshp, wts, dmat, thickness):
    ne = coords.shape[0]
    nen = coords.shape[1]
    ng = dshp.shape[0]
    ndof = 2 * nen
    out = np.zeros((ne, ndof, ndof))
    dndx = np.empty((nen, 2))
    g3 = np.empty((ndof, 3))
    dg = np.empty((ndof, 3))
    for e in range(ne):
        for g in range(ng):
            j00 = 0.0
            j01 = 0.0
            j10 = 0.0
            j11 = 0.0
            for a in range(nen):
                j00 += coords[e, a, 0] * dshp[g, a, 0]
                j01 += coords[e, a, 0] * dshp[g, a, 1]
                j10 += coords[e, a, 1] * dshp[g, a, 0]
                j11 += coords[e, a, 1] * dshp[g, a, 1]
            det = j00 * j11 - j01 * j10
            i00 = j11 / det
            i01 = -j01 / det
            i10 = -j10 / det
            i11 = j00 / det
            for a in range(nen):
                dndx[a, 0] = dshp[g, a, 0] * i00 + dshp[g, a, 1] * i10
                dndx[a, 1] = dshp[g, a, 0] * i01 + dshp[g, a, 1] * i11
            # g3 = B^T with B the 3 x ndof strain-displacement matrix
            for a in range(nen):
                g3[2 * a, 0] = dndx[a, 0]
                g3[2 * a, 1] = 0.0
                g3[2 * a, 2] = dndx[a, 1]
                g3[2 * a + 1, 0] = 0.0
                g3[2 * a + 1, 1] = dndx[a, 1]
                g3[2 * a + 1, 2] = dndx[a, 0]
            scale = wts[g] * det * thickness
            for r in range(ndof):
                for c in range(3):
                    dg[r, c] = (
                        g3[r, 0] * dmat[0, c]
                        + g3[r, 1] * dmat[1, c]
                        + g3[r, 2] * dmat[2, c]
                    )
            for r in range(ndof):
                for c in range(ndof):
                    out[e, r, c] += scale * (
                        dg[r, 0] * g3[c, 0] + dg[r, 1] * g3[c, 1] + dg[r, 2] * g3[c, 2]
                    )
    return out


def _element_stiffness_numpy(coords, dshp, wts, dmat, thickness, chunk=4096):
    ne = coords.shape[0]
    nen = coords.shape[1]
    ndof = 2 * nen
    out = np.empty((ne, ndof, ndof))
    for lo in range(0, ne, chunk):
        hi = min(lo + chunk, ne)
        c = coords[lo:hi]
        jac = np.einsum("eai,gaj->egij", c, dshp)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        dndx = np.einsum("gaj,egji->egai", dshp, inv)
        nb = hi - lo
        bmat = np.zeros((nb, dshp.shape[0], 3, ndof))
        bmat[..., 0, 0::2] = dndx[..., 0]
        bmat[..., 1, 1::2] = dndx[..., 1]
        bmat[..., 2, 0::2] = dndx[..., 1]
        bmat[..., 2, 1::2] = dndx[..., 0]
        scale = wts[None, :] * det * thickness
        out[lo:hi] = np.einsum("egki,kl,eglj,eg->eij", bmat, dmat, bmat, scale)
    return out


def element_stiffness_batch(coords, dshp, wts, dmat, thickness):
    """Plane-stress stiffness of a batch of elements, shape (ne, 2*nen, 2*nen).

    coords: (ne, nen, 2) nodal coordinates, dshp: (ng, nen, 2) reference
    shape-function gradients, wts: (ng,) quadrature weights, dmat: (3, 3).
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    dshp = np.ascontiguousarray(dshp, dtype=np.float64)
    wts = np.ascontiguousarray(wts, dtype=np.float64)
    dmat = np.ascontiguousarray(dmat, dtype=np.float64)
    if USE_NUMBA:
        return _element_stiffness_numba(coords, dshp, wts, dmat, float(thickness))
    return _element_stiffness_numpy(coords, dshp, wts, dmat, float(thickness))


@njit(cache=True)
def _min_detj_numba(coords, dshp):
    ne = coords.shape[0]
    ng = dshp.shape[0]
    out = np.empty(ne)
    for e in range(ne):
        best = np.inf
        for g in range(ng):
            j00 = 0.0
            j01 = 0.0
            j10 = 0.0
            j11 = 0.0
            for a in range(coords.shape[1]):
                j00 += coords[e, a, 0] * dshp[g, a, 0]
                j01 += coords[e, a, 0] * dshp[g, a, 1]
                j10 += coords[e, a, 1] * dshp[g, a, 0]
                j11 += coords[e, a, 1] * dshp[g, a, 1]
            det = j00 * j11 - j01 * j10
            if det < best:
                best = det
        out[e] = best
    return out


def _min_detj_numpy(coords, dshp):
    jac = np.einsum("eai,gaj->egij", coords, dshp)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return det.min(axis=1)


def min_jacobian_batch(coords, dshp):
    """Minimum Jacobian determinant per element over the sample points."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    dshp = np.ascontiguousarray(dshp, dtype=np.float64)
    if USE_NUMBA:
        return _min_detj_numba(coords, dshp)
    return _min_detj_numpy(coords, dshp)
