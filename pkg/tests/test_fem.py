import numpy as np
import pytest

from fibertop import fem
from fibertop.fem import (BoundaryConditions, DesignState, MeshError,
                          SolverError, StructuredMesh, adjoint_solve,
                          assemble_stiffness, element_stiffness,
                          element_stiffness_angle_derivative, element_stresses,
                          solve_equilibrium, strain_displacement)
from fibertop.material import OrthotropicMaterial, constitutive_matrix

EPOXY = OrthotropicMaterial(38.6e9, 8.27e9, 4.14e9, 0.27, 0.0578)


def single_element_model(theta=0.0, elem_size=1.0):
    """One Q4 element fixed on its left edge."""
    mesh = StructuredMesh(1, 1, elem_size=elem_size)
    left = [mesh.node_id(0, 0), mesh.node_id(0, 1)]
    fixed = np.array([2 * n + d for n in left for d in (0, 1)])
    return mesh, fixed


class TestStrainDisplacement:
    def test_rigid_translation_gives_zero_strain(self):
        b = strain_displacement(1.0)
        u = np.array([3.0, -2.0] * 4)
        assert np.allclose(b @ u, 0.0)

    def test_uniform_x_stretch(self):
        b = strain_displacement(1.0)
        delta = 0.01
        u = np.array([0, 0, delta, 0, delta, 0, 0, 0], dtype=float)
        assert np.allclose(b @ u, [delta, 0, 0])

    def test_pure_shear_pattern(self):
        # u_x = gamma * y on a unit square: engineering shear = gamma
        gamma = 0.02
        b = strain_displacement(1.0)
        u = np.array([0, 0, 0, 0, gamma, 0, gamma, 0], dtype=float)
        assert np.allclose(b @ u, [0, 0, gamma])

    def test_scales_with_element_size(self):
        assert np.allclose(strain_displacement(2.0), 0.5 * strain_displacement(1.0))

    def test_rejects_nonpositive_size(self):
        with pytest.raises(ValueError):
            strain_displacement(0.0)


class TestElementStiffness:
    def test_symmetric(self):
        k = element_stiffness(EPOXY, 0.37, 1.0, 1.0)
        assert np.abs(k - k.T).max() <= 1e-12 * np.abs(k).max()

    def test_pi_periodic(self):
        a = element_stiffness(EPOXY, 0.8, 1.0, 1.0)
        b = element_stiffness(EPOXY, 0.8 + np.pi, 1.0, 1.0)
        assert np.allclose(a, b, rtol=1e-12)

    def test_three_rigid_body_modes(self):
        k = element_stiffness(EPOXY, -0.4, 1.0, 1.0)
        lams = np.linalg.eigvalsh(k)
        assert np.all(np.abs(lams[:3]) <= 1e-6 * lams[-1])
        assert lams[3] > 1e-6 * lams[-1]

    @pytest.mark.parametrize("theta", [0.0, 0.5, -1.3])
    def test_angle_derivative_matches_fd(self, theta):
        h = 1e-6
        dk = element_stiffness_angle_derivative(EPOXY, theta, 1.0, 1.0)
        fd = (element_stiffness(EPOXY, theta + h, 1.0, 1.0)
              - element_stiffness(EPOXY, theta - h, 1.0, 1.0)) / (2 * h)
        assert np.abs(fd - dk).max() <= 1e-6 * np.abs(dk).max()

    def test_batch_matches_scalar(self):
        thetas = np.array([0.1, -0.6, 2.0])
        batch = element_stiffness(EPOXY, thetas, 1.0, 1.0)
        assert batch.shape == (3, 8, 8)
        for i, theta in enumerate(thetas):
            assert np.allclose(batch[i], element_stiffness(EPOXY, theta, 1.0, 1.0))


class TestMesh:
    def test_counts_full_rectangle(self):
        mesh = StructuredMesh(4, 3)
        assert mesh.n_elems == 12
        assert mesh.n_nodes == 20
        assert mesh.n_dofs == 40

    def test_lbracket_mask_counts(self):
        active = np.ones((4, 4), dtype=bool)
        active[2:, 2:] = False
        mesh = StructuredMesh(4, 4, active=active)
        assert mesh.n_elems == 12
        # nodes of the cut block interior never appear
        with pytest.raises(MeshError):
            mesh.node_id(4, 4)

    def test_every_element_has_four_distinct_nodes(self):
        active = np.ones((5, 4), dtype=bool)
        active[4, 3] = False
        mesh = StructuredMesh(5, 4, active=active)
        for row in mesh.elem_nodes:
            assert len(set(row.tolist())) == 4

    def test_disconnected_mask_rejected(self):
        active = np.zeros((3, 3), dtype=bool)
        active[0, 0] = active[2, 2] = True
        with pytest.raises(MeshError):
            StructuredMesh(3, 3, active=active)

    def test_diagonal_contact_is_not_connected(self):
        active = np.array([[True, False], [False, True]])
        with pytest.raises(MeshError):
            StructuredMesh(2, 2, active=active)


class TestAssembly:
    def test_full_density_matches_unpenalized(self):
        mesh = StructuredMesh(3, 2)
        design = DesignState(np.ones(6), np.zeros(6))
        k3 = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        k1 = assemble_stiffness(mesh, EPOXY, design, p=1.0)
        assert np.allclose(k3.toarray(), k1.toarray())

    def test_uniform_density_scales_by_eta(self):
        mesh = StructuredMesh(3, 2)
        full = DesignState(np.ones(6), np.full(6, 0.3))
        half = DesignState(np.full(6, 0.5), np.full(6, 0.3))
        kf = assemble_stiffness(mesh, EPOXY, full, p=3.0)
        kh = assemble_stiffness(mesh, EPOXY, half, p=3.0)
        assert np.allclose(kh.toarray(), 0.125 * kf.toarray())

    def test_single_element_reduces_to_element_matrix(self):
        mesh, fixed = single_element_model()
        design = DesignState(np.ones(1), np.array([0.2]))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        ke = element_stiffness(EPOXY, 0.2, 1.0, 1.0)
        free = np.setdiff1d(np.arange(8), fixed)
        dofs = mesh.elem_dofs[0]
        kff = k.toarray()[np.ix_(free, free)]
        pos = [np.nonzero(dofs == f)[0][0] for f in free]
        assert np.allclose(kff, ke[np.ix_(pos, pos)])

    def test_assembly_deterministic(self):
        mesh = StructuredMesh(6, 5)
        rng = np.random.default_rng(3)
        design = DesignState(rng.uniform(0.2, 1.0, 30), rng.uniform(-3, 3, 30))
        a = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        b = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        assert np.array_equal(a.data, b.data)

    def test_rejects_low_power(self):
        mesh = StructuredMesh(2, 2)
        design = DesignState(np.ones(4), np.zeros(4))
        with pytest.raises(ValueError):
            assemble_stiffness(mesh, EPOXY, design, p=0.5)


class TestSolve:
    def test_zero_force_zero_displacement(self):
        mesh, fixed = single_element_model()
        design = DesignState(np.ones(1), np.zeros(1))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        bc = BoundaryConditions(fixed, {})
        solved = solve_equilibrium(k, bc, np.zeros(mesh.n_dofs))
        assert np.allclose(solved.u, 0.0)

    def test_single_element_matches_dense_oracle(self):
        mesh, fixed = single_element_model(theta=0.0)
        design = DesignState(np.ones(1), np.zeros(1))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        f = np.zeros(mesh.n_dofs)
        right = [mesh.node_id(1, 0), mesh.node_id(1, 1)]
        for n in right:
            f[2 * n] = 500.0  # axial pull
        bc = BoundaryConditions(fixed, {2 * n: 500.0 for n in right})
        solved = solve_equilibrium(k, bc, f)
        free = np.setdiff1d(np.arange(8), fixed)
        ke = element_stiffness(EPOXY, 0.0, 1.0, 1.0)
        dofs = mesh.elem_dofs[0]
        pos = [np.nonzero(dofs == fr)[0][0] for fr in free]
        u_free = np.linalg.solve(ke[np.ix_(pos, pos)], f[free])
        assert np.allclose(solved.u[free], u_free, rtol=1e-10)

    def test_linearity_in_load(self):
        mesh, fixed = single_element_model()
        design = DesignState(np.ones(1), np.array([0.4]))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        f = np.zeros(mesh.n_dofs)
        f[2 * mesh.node_id(1, 1) + 1] = -100.0
        bc = BoundaryConditions(fixed, {})
        u1 = solve_equilibrium(k, bc, f).u
        u2 = solve_equilibrium(k, bc, 2.0 * f).u
        assert np.allclose(u2, 2.0 * u1, rtol=1e-12)

    def test_unconstrained_system_raises(self):
        mesh = StructuredMesh(2, 2)
        design = DesignState(np.ones(4), np.zeros(4))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        bc = BoundaryConditions(np.array([0, 1, 3]), {})
        f = np.zeros(mesh.n_dofs)
        f[-1] = 1.0
        with pytest.raises(SolverError):
            solve_equilibrium(k, bc, f)

    def test_residual_invariant(self):
        mesh = StructuredMesh(5, 4)
        rng = np.random.default_rng(7)
        design = DesignState(rng.uniform(0.3, 1.0, 20), rng.uniform(-2, 2, 20))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        fixed = np.array([2 * mesh.node_id(0, iy) + d for iy in range(5) for d in (0, 1)])
        bc = BoundaryConditions(fixed, {})
        f = np.zeros(mesh.n_dofs)
        f[2 * mesh.node_id(5, 0) + 1] = -1e4
        solved = solve_equilibrium(k, bc, f)
        resid = np.abs((k @ solved.u - f)[solved.free_dofs]).max()
        assert resid <= 1e-8 * np.abs(f).max()


class TestStresses:
    def test_zero_density_zero_stress(self):
        mesh = StructuredMesh(2, 1)
        design = DesignState(np.array([0.0, 1.0]), np.zeros(2))
        u = np.arange(mesh.n_dofs, dtype=float) * 1e-4
        field = element_stresses(mesh, EPOXY, design, u)
        assert np.all(field.values[0] == 0.0)
        assert np.any(field.values[1] != 0.0)

    def test_sqrt_density_scaling(self):
        mesh = StructuredMesh(2, 2)
        u = np.linspace(-1, 1, mesh.n_dofs) * 1e-3
        full = element_stresses(mesh, EPOXY, DesignState(np.ones(4), np.zeros(4)), u)
        quarter = element_stresses(mesh, EPOXY, DesignState(np.full(4, 0.25), np.zeros(4)), u)
        assert np.allclose(quarter.values, 0.5 * full.values)

    def test_uniaxial_strain_recovers_constitutive_column(self):
        mesh = StructuredMesh(1, 1)
        e = constitutive_matrix(EPOXY)
        u = np.zeros(8)
        for ix, iy in ((1, 0), (1, 1)):
            u[2 * mesh.node_id(ix, iy)] = 1.0  # unit eps_11 on a unit square
        field = element_stresses(mesh, EPOXY, DesignState(np.ones(1), np.zeros(1)), u)
        assert field.sigma1[0] == pytest.approx(e[0, 0])
        assert field.sigma2[0] == pytest.approx(e[1, 0])
        assert field.tau12[0] == pytest.approx(0.0, abs=1e-6)


class TestAdjoint:
    @pytest.fixture()
    def solved_state(self):
        mesh = StructuredMesh(4, 3)
        rng = np.random.default_rng(11)
        design = DesignState(rng.uniform(0.3, 1.0, 12), rng.uniform(-1, 1, 12))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        fixed = np.array([2 * mesh.node_id(0, iy) + d for iy in range(4) for d in (0, 1)])
        bc = BoundaryConditions(fixed, {})
        f = np.zeros(mesh.n_dofs)
        f[2 * mesh.node_id(4, 0) + 1] = -1e3
        return mesh, k, f, solve_equilibrium(k, bc, f)

    def test_zero_rhs(self, solved_state):
        _, _, _, solved = solved_state
        assert np.allclose(adjoint_solve(solved, np.zeros_like(solved.u)), 0.0)

    def test_force_rhs_returns_displacements(self, solved_state):
        _, _, f, solved = solved_state
        assert np.allclose(adjoint_solve(solved, f), solved.u, rtol=1e-10)

    def test_random_rhs_residual(self, solved_state):
        _, k, _, solved = solved_state
        rng = np.random.default_rng(5)
        rhs = rng.normal(size=solved.u.size)
        lam = adjoint_solve(solved, rhs)
        resid = np.abs((k @ lam - rhs)[solved.free_dofs]).max()
        assert resid <= 1e-8 * np.abs(rhs).max()


class TestComplianceForms:
    def test_two_compliance_forms_agree(self):
        from fibertop.compliance import compliance_and_gradients
        mesh = StructuredMesh(6, 4)
        rng = np.random.default_rng(2)
        n = mesh.n_elems
        design = DesignState(rng.uniform(0.2, 1.0, n), rng.uniform(-2, 2, n))
        k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
        fixed = np.array([2 * mesh.node_id(0, iy) + d for iy in range(5) for d in (0, 1)])
        bc = BoundaryConditions(fixed, {})
        f = np.zeros(mesh.n_dofs)
        f[2 * mesh.node_id(6, 0) + 1] = -2e3
        solved = solve_equilibrium(k, bc, f)
        obj = compliance_and_gradients(mesh, EPOXY, design, solved, p=3.0)
        assert obj.c == pytest.approx(float(solved.u @ f), rel=1e-8)

    def test_masked_mesh_equivalent_to_zero_density(self):
        # a hole modelled by mask must match the same hole carried as rho = 0
        active = np.ones((4, 3), dtype=bool)
        active[2, 1] = False
        masked = StructuredMesh(4, 3, active=active)
        full = StructuredMesh(4, 3)

        def solve(mesh, rho):
            design = DesignState(rho, np.zeros(mesh.n_elems))
            k = assemble_stiffness(mesh, EPOXY, design, p=3.0)
            fixed = np.array([2 * mesh.node_id(0, iy) + d
                              for iy in range(4) for d in (0, 1)])
            f = np.zeros(mesh.n_dofs)
            f[2 * mesh.node_id(4, 0) + 1] = -1e3
            solved = solve_equilibrium(k, BoundaryConditions(fixed, {}), f)
            return float(solved.u @ f)

        rho_full = np.ones(12)
        rho_full[full.grid_elem[2, 1]] = 0.0
        c_masked = solve(masked, np.ones(11))
        c_full = solve(full, rho_full)
        assert c_masked == pytest.approx(c_full, rel=1e-6)


class TestBoundaryConditions:
    def test_overlapping_load_and_support_rejected(self):
        mesh = StructuredMesh(2, 2)
        bc = BoundaryConditions(np.array([0, 1, 2]), {1: 5.0})
        with pytest.raises(MeshError):
            bc.validate(mesh)

    def test_too_few_constraints_rejected(self):
        mesh = StructuredMesh(2, 2)
        bc = BoundaryConditions(np.array([0, 1]), {})
        with pytest.raises(MeshError):
            bc.validate(mesh)
