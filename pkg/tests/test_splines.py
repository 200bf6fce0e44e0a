import numpy as np
import pytest

from igafem.errors import DomainError, PatchError, RefinementError
from igafem.splines import (
    KnotVector,
    SplinePatch,
    eval_basis,
    eval_basis_many,
    eval_geometry,
    eval_geometry_many,
    eval_nurbs_basis,
    knot_insertion_operator,
    quarter_annulus_patch,
    refine_patch,
    square_patch,
    uniform_knot_vector,
)

from helpers import basis_oracle, random_bspline_patch, random_open_kv, rational_basis_oracle


class TestKnotVector:
    def test_counts(self):
        kv = KnotVector(np.array([0, 0, 0, 0.5, 1, 1, 1.0]), 2)
        assert kv.num_basis == 4
        assert kv.num_spans == 2
        assert kv.domain == (0.0, 1.0)

    def test_not_open_rejected(self):
        with pytest.raises(PatchError):
            KnotVector(np.array([0, 0, 0.5, 1, 1, 1.0]), 2)

    def test_decreasing_rejected(self):
        with pytest.raises(PatchError):
            KnotVector(np.array([0, 0, 0.6, 0.4, 1, 1.0]), 1)

    def test_multiplicity_overflow_rejected(self):
        with pytest.raises(PatchError):
            KnotVector(np.array([0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1.0]), 2)


class TestEvalBasis:
    def test_linear_hats(self):
        kv = KnotVector(np.array([0.0, 0, 1, 1]), 1)
        np.testing.assert_allclose(eval_basis(kv, 0.5), [0.5, 0.5])

    def test_interpolatory_end(self):
        kv = uniform_knot_vector(1, 2)
        np.testing.assert_allclose(eval_basis(kv, 0.0), [1, 0, 0])

    def test_two_span_midpoint(self):
        # frozen from the Cox-de Boor recursion oracle
        kv = KnotVector(np.array([0, 0, 0, 0.5, 1, 1, 1.0]), 2)
        oracle = basis_oracle(kv.values, 2, 0.5)
        np.testing.assert_allclose(oracle, [0.0, 0.5, 0.5, 0.0], atol=1e-15)
        np.testing.assert_allclose(eval_basis(kv, 0.5), oracle, atol=1e-14)

    def test_out_of_range(self):
        kv = uniform_knot_vector(2, 2)
        with pytest.raises(DomainError):
            eval_basis(kv, 1.5)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_matches_recursion_oracle(self, degree):
        rng = np.random.default_rng(42 + degree)
        for _ in range(5):
            kv = random_open_kv(rng, degree)
            xs = rng.uniform(0.0, 1.0, 20)
            got = eval_basis_many(kv, xs)
            want = np.array([basis_oracle(kv.values, degree, x) for x in xs])
            np.testing.assert_allclose(got, want, atol=1e-13)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_partition_of_unity(self, degree):
        rng = np.random.default_rng(7 * degree + 1)
        for _ in range(5):
            kv = random_open_kv(rng, degree)
            xs = rng.uniform(0.0, 1.0, 100)
            vals = eval_basis_many(kv, xs)
            np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(vals >= -1e-14)

    def test_local_support(self):
        rng = np.random.default_rng(3)
        kv = random_open_kv(rng, 2, min_breaks=2)
        xs = rng.uniform(0.0, 1.0, 200)
        vals = eval_basis_many(kv, xs)
        for i in range(kv.num_basis):
            lo, hi = kv.values[i], kv.values[i + kv.degree + 1]
            outside = (xs < lo - 1e-14) | (xs > hi + 1e-14)
            assert np.all(vals[outside, i] == 0.0)


class TestNurbs:
    def test_unit_weights_match_bspline(self):
        rng = np.random.default_rng(11)
        patch = random_bspline_patch(rng, 2, 1)
        for x in rng.uniform(0, 1, 10):
            got = eval_nurbs_basis(patch, x)
            want = eval_basis_many(patch.knot_vectors[0], [x])[0]
            np.testing.assert_allclose(got, want, atol=1e-14)

    def test_quarter_arc_clamped_end(self):
        kv = uniform_knot_vector(1, 2)
        s = np.sqrt(2) / 2
        patch = SplinePatch(
            (kv,), np.array([[1.0, 0], [1, 1], [0, 1]]), np.array([1.0, s, 1.0])
        )
        np.testing.assert_allclose(eval_nurbs_basis(patch, 0.0), [1, 0, 0], atol=1e-15)

    def test_matches_rational_formula_oracle(self):
        rng = np.random.default_rng(5)
        for ndim in (1, 2):
            patch = random_bspline_patch(rng, 2, ndim)
            patch = SplinePatch(
                patch.knot_vectors,
                patch.control_points,
                rng.uniform(0.2, 3.0, patch.num_basis),
            )
            for _ in range(10):
                pt = rng.uniform(0, 1, ndim)
                got = eval_nurbs_basis(patch, pt)
                want = rational_basis_oracle(patch, pt)
                np.testing.assert_allclose(got, want, atol=1e-14)

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(8)
        patch = random_bspline_patch(rng, 2, 2)
        w = rng.uniform(0.5, 2.0, patch.num_basis)
        a = SplinePatch(patch.knot_vectors, patch.control_points, w)
        b = SplinePatch(patch.knot_vectors, patch.control_points, 7.3 * w)
        for _ in range(10):
            pt = rng.uniform(0, 1, 2)
            va, vb = eval_nurbs_basis(a, pt), eval_nurbs_basis(b, pt)
            assert np.argmax(va) == np.argmax(vb)
            np.testing.assert_allclose(va, vb, atol=1e-14)

    def test_nonpositive_weight_rejected(self):
        kv = uniform_knot_vector(1, 1)
        with pytest.raises(PatchError):
            SplinePatch((kv,), np.zeros((2, 2)), np.array([1.0, 0.0]))


class TestGeometry:
    def test_straight_segment_midpoint(self):
        kv = uniform_knot_vector(1, 1)
        patch = SplinePatch((kv,), np.array([[0.0, 0], [1, 0]]))
        np.testing.assert_allclose(eval_geometry(patch, 0.5), [0.5, 0.0])

    def test_quarter_circle_radius(self):
        kv = uniform_knot_vector(1, 2)
        s = np.sqrt(2) / 2
        patch = SplinePatch(
            (kv,), np.array([[1.0, 0], [1, 1], [0, 1]]), np.array([1.0, s, 1.0])
        )
        xs = np.linspace(0, 1, 37)
        pts = eval_geometry_many(patch, xs[:, None])
        np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-12)

    def test_bilinear_patch_interpolant(self):
        kv = uniform_knot_vector(1, 1)
        corners = np.array([[0.0, 0], [2, 0], [0, 1], [2, 2]])
        patch = SplinePatch((kv, kv), corners)
        xi, eta = 0.25, 0.75
        want = (
            (1 - xi) * (1 - eta) * corners[0]
            + xi * (1 - eta) * corners[1]
            + (1 - xi) * eta * corners[2]
            + xi * eta * corners[3]
        )
        np.testing.assert_allclose(eval_geometry(patch, (xi, eta)), want, atol=1e-14)

    def test_annulus_preset_is_exact(self):
        patch = quarter_annulus_patch(5.0, 10.0)
        rng = np.random.default_rng(2)
        pts = rng.uniform(0, 1, size=(50, 2))
        xy = eval_geometry_many(patch, pts)
        r = np.hypot(xy[:, 0], xy[:, 1])
        want = 5.0 + 5.0 * pts[:, 1]
        np.testing.assert_allclose(r, want, atol=1e-12)


class TestKnotInsertion:
    def test_empty_insertion_is_identity(self):
        kv = uniform_knot_vector(2, 2)
        fine, op = knot_insertion_operator(kv, [])
        assert fine.num_basis == kv.num_basis
        np.testing.assert_array_equal(op.matrix.toarray(), np.eye(kv.num_basis))

    def test_boehm_single_insertion_control_points(self):
        # Boehm oracle: inserting 0.5 into [0,0,0,1,1,1] gives
        # {P1, (P1+P2)/2, (P2+P3)/2, P3}
        kv = uniform_knot_vector(1, 2)
        pts = np.array([[0.0, 0], [1, 2], [3, 1]])
        patch = SplinePatch((kv,), pts)
        fine_patch, op = refine_patch(patch, [[0.5]])
        want = np.array([pts[0], 0.5 * (pts[0] + pts[1]), 0.5 * (pts[1] + pts[2]), pts[2]])
        np.testing.assert_allclose(fine_patch.control_points, want, atol=1e-15)
        assert op.matrix.shape == (3, 4)

    def test_column_sums_one(self):
        rng = np.random.default_rng(17)
        for degree in (1, 2, 3):
            kv = random_open_kv(rng, degree)
            brk = kv.breakpoints()
            news = 0.5 * (brk[:-1] + brk[1:])
            fine, op = knot_insertion_operator(kv, news)
            sums = np.asarray(op.matrix.sum(axis=0)).ravel()
            np.testing.assert_allclose(sums, 1.0, atol=1e-14)
            assert op.matrix.min() >= 0.0

    def test_coarse_equals_d_times_fine(self):
        rng = np.random.default_rng(23)
        for degree in (1, 2, 3):
            kv = random_open_kv(rng, degree)
            brk = kv.breakpoints()
            news = np.concatenate(
                [0.5 * (brk[:-1] + brk[1:]), 0.25 * brk[:-1] + 0.75 * brk[1:]]
            )
            fine, op = knot_insertion_operator(kv, news)
            xs = rng.uniform(0, 1, 60)
            coarse_vals = eval_basis_many(kv, xs)
            fine_vals = eval_basis_many(fine, xs)
            np.testing.assert_allclose(
                coarse_vals, fine_vals @ op.matrix.toarray().T, atol=1e-12
            )

    def test_boundary_insertion_rejected(self):
        kv = uniform_knot_vector(2, 2)
        with pytest.raises(RefinementError):
            knot_insertion_operator(kv, [0.0])

    def test_multiplicity_overflow_rejected(self):
        kv = KnotVector(np.array([0, 0, 0, 0.5, 0.5, 1, 1, 1.0]), 2)
        with pytest.raises(RefinementError):
            knot_insertion_operator(kv, [0.5])


class TestRefinePatch:
    def test_figure_one_counts(self):
        # 1D quadratic, 4 control points on 2 spans; inserting {0.25, 0.75}
        # must produce 6 control points
        kv = KnotVector(np.array([0, 0, 0, 0.5, 1, 1, 1.0]), 2)
        pts = np.array([[0.0, 0], [1, 1], [2, 1], [3, 0]])
        patch = SplinePatch((kv,), pts)
        fine, op = refine_patch(patch, [[0.25, 0.75]])
        assert fine.num_basis == 6
        assert op.matrix.shape == (4, 6)

    def test_tensor_direction_independence(self):
        patch = square_patch(side=1.0, degree=2)
        fine, _ = refine_patch(patch, [[0.25, 0.5, 0.75], []])
        assert fine.basis_shape[1] == patch.basis_shape[1]
        assert fine.basis_shape[0] == patch.basis_shape[0] + 3

    def test_geometry_invariance_bspline(self):
        rng = np.random.default_rng(31)
        patch = random_bspline_patch(rng, 2, 2)
        news = [
            np.unique(rng.uniform(0.05, 0.95, 3)),
            np.unique(rng.uniform(0.05, 0.95, 2)),
        ]
        fine, _ = refine_patch(patch, news)
        pts = rng.uniform(0, 1, size=(50, 2))
        np.testing.assert_allclose(
            eval_geometry_many(fine, pts), eval_geometry_many(patch, pts), atol=1e-12
        )

    def test_geometry_invariance_nurbs(self):
        patch = quarter_annulus_patch()
        fine, _ = refine_patch(patch, [np.linspace(0, 1, 7)[1:-1], [0.5]])
        rng = np.random.default_rng(41)
        pts = rng.uniform(0, 1, size=(50, 2))
        np.testing.assert_allclose(
            eval_geometry_many(fine, pts), eval_geometry_many(patch, pts), atol=1e-12
        )
