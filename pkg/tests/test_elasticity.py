import numpy as np
import pytest

from igafem.elasticity import (
    ConstrainedOperator,
    LoadCase,
    Material,
    assemble_loads,
    assemble_stiffness,
    dirichlet_dofs,
    project_operator,
    prolong_solution,
    relative_energy_error,
    strain_energy,
)
from igafem.errors import MaterialError, MeshError
from igafem.extraction import lagrange_extraction
from igafem.mesh import FEMesh, build_global_fe_mesh
from igafem.splines import (
    eval_basis_derivs_many,
    eval_basis_many,
    refine_to_spans,
    square_patch,
)

MAT = Material(1000.0, 0.3)


def make_grid(nspans, side=2.0, degree=2):
    fine, _ = refine_to_spans(square_patch(side, degree), nspans)
    bridge = lagrange_extraction(fine)
    return fine, bridge, build_global_fe_mesh(fine, bridge)


class TestMaterial:
    def test_d_matrix_plane_stress(self):
        d = Material(1.0, 0.25).d_matrix()
        c = 1.0 / (1 - 0.25**2)
        np.testing.assert_allclose(d, c * np.array([[1, 0.25, 0], [0.25, 1, 0], [0, 0, 0.375]]))

    def test_invalid_parameters(self):
        with pytest.raises(MaterialError):
            Material(-1.0, 0.3)
        with pytest.raises(MaterialError):
            Material(1.0, 0.6)


class TestStiffness:
    def test_rigid_modes_in_kernel(self):
        _, _, grid = make_grid((1, 1), side=1.0)
        k = assemble_stiffness(grid.mesh, MAT)
        scale = np.abs(k).max()
        n = grid.mesh.num_nodes
        tx = np.tile([1.0, 0.0], n)
        ty = np.tile([0.0, 1.0], n)
        rot = np.column_stack([-grid.mesh.nodes[:, 1], grid.mesh.nodes[:, 0]]).ravel()
        for mode in (tx, ty, rot):
            assert np.abs(k @ mode).max() < 1e-10 * scale

    def test_symmetry(self):
        _, _, grid = make_grid((3, 2))
        k = assemble_stiffness(grid.mesh, MAT)
        assert np.abs((k - k.T)).max() < 1e-12 * np.abs(k).max()

    def test_patch_test_two_elements(self):
        # linear displacement reproduced exactly, constant stress
        _, _, grid = make_grid((2, 1))
        mesh = grid.mesh
        k = assemble_stiffness(mesh, MAT)
        exact = np.column_stack(
            [
                1e-3 * mesh.nodes[:, 0] + 4e-4 * mesh.nodes[:, 1],
                -2e-4 * mesh.nodes[:, 0] + 6e-4 * mesh.nodes[:, 1],
            ]
        ).ravel()
        boundary = np.unique(
            np.concatenate([mesh.node_sets[s] for s in mesh.node_sets])
        )
        fixed = np.concatenate([2 * boundary, 2 * boundary + 1])
        op = ConstrainedOperator(k, fixed, exact[fixed])
        u = op.solve(np.zeros(mesh.num_dofs))
        np.testing.assert_allclose(u, exact, atol=1e-10 * np.abs(exact).max())
        from igafem.elasticity import gauss_stresses

        (_, _, sig) = gauss_stresses(mesh, MAT, u)[0]
        for c in range(3):
            np.testing.assert_allclose(sig[..., c], sig[0, 0, c], atol=1e-10)

    def test_t3_matches_cst_closed_form(self):
        nodes = np.array([[0.0, 0.0], [2.0, 0.3], [0.5, 1.7]])
        mesh = FEMesh(nodes, [("T3", np.array([[0, 1, 2]]))])
        k = assemble_stiffness(mesh, MAT).toarray()
        (x1, y1), (x2, y2), (x3, y3) = nodes
        area = 0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1))
        b = np.array(
            [
                [y2 - y3, 0, y3 - y1, 0, y1 - y2, 0],
                [0, x3 - x2, 0, x1 - x3, 0, x2 - x1],
                [x3 - x2, y2 - y3, x1 - x3, y3 - y1, x2 - x1, y1 - y2],
            ]
        ) / (2 * area)
        want = MAT.thickness * area * b.T @ MAT.d_matrix() @ b
        np.testing.assert_allclose(k, want, atol=1e-12 * np.abs(want).max())

    def test_subset_additivity(self):
        _, _, grid = make_grid((3, 3))
        mesh = grid.mesh
        ids = np.arange(mesh.blocks[0][1].shape[0])
        k_all = assemble_stiffness(mesh, MAT, ids)
        k_a = assemble_stiffness(mesh, MAT, ids[:4])
        k_b = assemble_stiffness(mesh, MAT, ids[4:])
        assert np.abs((k_a + k_b - k_all)).max() < 1e-12 * np.abs(k_all).max()


class TestLoads:
    def test_zero_traction(self):
        _, _, grid = make_grid((2, 2))
        f = assemble_loads(grid.mesh, LoadCase(neumann=[("side_eta0", (0.0, 0.0))]))
        assert not f.any()

    def test_quadratic_edge_weights(self):
        _, _, grid = make_grid((1, 1), side=3.0)
        f = assemble_loads(
            grid.mesh, LoadCase(neumann=[("side_eta0", (1.0, 0.0))]), thickness=2.0
        )
        ids = grid.mesh.node_sets["side_eta0"]
        fx = f[2 * ids]
        length = 3.0
        np.testing.assert_allclose(
            np.sort(fx), np.sort(length * 2.0 * np.array([1 / 6, 2 / 3, 1 / 6])), atol=1e-13
        )
        assert f.sum() == pytest.approx(length * 2.0, abs=1e-12)

    def test_two_edges_additive(self):
        _, _, grid = make_grid((2, 2))
        f1 = assemble_loads(grid.mesh, LoadCase(neumann=[("side_eta0", (0.5, 1.0))]))
        f2 = assemble_loads(grid.mesh, LoadCase(neumann=[("side_xi0", (0.5, 1.0))]))
        f12 = assemble_loads(
            grid.mesh,
            LoadCase(neumann=[("side_eta0", (0.5, 1.0)), ("side_xi0", (0.5, 1.0))]),
        )
        np.testing.assert_allclose(f12, f1 + f2, atol=1e-14)

    def test_unknown_set_raises(self):
        _, _, grid = make_grid((2, 2))
        with pytest.raises(MeshError, match="unknown"):
            assemble_loads(grid.mesh, LoadCase(neumann=[("nope", (1.0, 0.0))]))
        with pytest.raises(MeshError, match="unknown"):
            dirichlet_dofs(
                LoadCase(dirichlet=[("nope", "x", 0.0)]), grid.mesh.node_sets, 4
            )


class TestProjection:
    def test_identity_bridge_is_noop(self):
        from igafem.extraction import identity_bridge

        _, _, grid = make_grid((2, 2))
        k = assemble_stiffness(grid.mesh, MAT)
        f = assemble_loads(grid.mesh, LoadCase(neumann=[("side_xi1", (1.0, 0.0))]))
        kc, fc = project_operator(identity_bridge(grid.mesh.num_nodes), k, f)
        assert np.abs((kc - k)).max() < 1e-14 * np.abs(k).max()
        np.testing.assert_allclose(fc, f)

    def test_projected_matches_direct_spline_quadrature(self):
        # single-element quadratic B-spline patch: D K_f D^T must equal the
        # directly integrated spline stiffness
        patch, bridge, grid = make_grid((1, 1), side=2.0)
        k_f = assemble_stiffness(grid.mesh, MAT)
        k_c, _ = project_operator(bridge, k_f, np.zeros(grid.mesh.num_dofs))

        # independent direct integration on the parametric span
        g = np.sqrt(0.6)
        gp = np.array([-g, 0.0, g]) * 0.5 + 0.5
        gw = np.array([5, 8, 5]) / 9.0 * 0.5
        kv = patch.knot_vectors[0]
        vals, ders = eval_basis_derivs_many(kv, gp)
        n1 = kv.num_basis
        jac = 2.0  # dx/dxi for the side-2 square on a unit knot span
        dmat = MAT.d_matrix()
        want = np.zeros((2 * n1 * n1, 2 * n1 * n1))
        for a in range(3):
            for b in range(3):
                nx = np.outer(vals[b], ders[a]).ravel() / jac
                ny = np.outer(ders[b], vals[a]).ravel() / jac
                bm = np.zeros((3, 2 * n1 * n1))
                bm[0, 0::2] = nx
                bm[1, 1::2] = ny
                bm[2, 0::2] = ny
                bm[2, 1::2] = nx
                want += gw[a] * gw[b] * jac * jac * (bm.T @ dmat @ bm)
        np.testing.assert_allclose(
            k_c.toarray(), want, atol=1e-12 * np.abs(want).max()
        )

    def test_rigid_mode_preserved(self):
        _, bridge, grid = make_grid((3, 2))
        k_f = assemble_stiffness(grid.mesh, MAT)
        k_c, _ = project_operator(bridge, k_f, np.zeros(grid.mesh.num_dofs))
        n_cp = bridge.shape[0]
        rigid = np.tile([1.0, -2.0], n_cp)
        assert np.abs(k_c @ rigid).max() < 1e-10 * np.abs(k_c).max()

    def test_galerkin_energy_identity(self):
        rng = np.random.default_rng(12)
        _, bridge, grid = make_grid((3, 3))
        k_f = assemble_stiffness(grid.mesh, MAT)
        k_c, _ = project_operator(bridge, k_f, np.zeros(grid.mesh.num_dofs))
        u_c = rng.standard_normal(2 * bridge.shape[0])
        e_coarse = strain_energy(k_c, u_c)
        e_fine = strain_energy(k_f, prolong_solution(bridge, u_c))
        assert abs(e_coarse - e_fine) <= 1e-12 * max(1.0, abs(e_fine))


class TestProlongation:
    def test_zero_maps_to_zero(self):
        _, bridge, _ = make_grid((2, 2))
        assert not prolong_solution(bridge, np.zeros(2 * bridge.shape[0])).any()

    def test_constant_translation(self):
        _, bridge, grid = make_grid((2, 3))
        u_c = np.tile([0.7, -1.1], bridge.shape[0])
        u_f = prolong_solution(bridge, u_c)
        np.testing.assert_allclose(u_f[0::2], 0.7, atol=1e-13)
        np.testing.assert_allclose(u_f[1::2], -1.1, atol=1e-13)

    def test_matches_pointwise_spline_evaluation(self):
        rng = np.random.default_rng(13)
        patch, bridge, grid = make_grid((3, 2))
        u_c = rng.standard_normal(2 * patch.num_basis)
        u_f = prolong_solution(bridge, u_c)
        px, py = bridge.node_params
        for j in (0, 2, 4):
            for i in (0, 1, 4):
                node = i + j * px.size
                n1 = eval_basis_many(patch.knot_vectors[0], [px[i]])[0]
                n2 = eval_basis_many(patch.knot_vectors[1], [py[j]])[0]
                basis = np.einsum("j,i->ji", n2, n1).ravel()
                np.testing.assert_allclose(
                    u_f[2 * node], basis @ u_c[0::2], atol=1e-12
                )
                np.testing.assert_allclose(
                    u_f[2 * node + 1], basis @ u_c[1::2], atol=1e-12
                )


class TestEnergy:
    def test_zero_displacement(self):
        k = assemble_stiffness(make_grid((1, 1))[2].mesh, MAT)
        assert strain_energy(k, np.zeros(k.shape[0])) == 0.0

    def test_relative_error_examples(self):
        assert relative_energy_error(2.0, 2.0) == 0.0
        assert relative_energy_error(1.9, 2.0) == pytest.approx(0.05)
        with pytest.raises(ValueError):
            relative_energy_error(1.0, 0.0)
