import numpy as np
import pytest

from fibertop.material import (MaterialError, OrthotropicMaterial,
                               constitutive_matrix, transform_derivatives,
                               transform_matrices, transformed_constitutive,
                               transformed_constitutive_derivative)

EPOXY = OrthotropicMaterial(38.6e9, 8.27e9, 4.14e9, 0.27, 0.0578)


def isotropic(e=10e9, nu=0.3):
    return OrthotropicMaterial(e, e, e / (2 * (1 + nu)), nu, nu)


def reciprocal(e1=38.6e9, e2=8.27e9, g12=4.14e9, nu12=0.27):
    return OrthotropicMaterial(e1, e2, g12, nu12, nu12 * e2 / e1)


class TestConstitutiveMatrix:
    def test_epoxy_glass_entries(self):
        # closed-form: e1 / (1 - nu12*nu21) etc., evaluated by hand
        e = constitutive_matrix(EPOXY)
        den = 1.0 - 0.27 * 0.0578
        assert e[0, 0] == pytest.approx(38.6e9 / den)
        assert e[0, 0] == pytest.approx(39.212e9, rel=1e-4)
        assert e[1, 1] == pytest.approx(8.401e9, rel=1e-4)
        assert e[2, 2] == 4.14e9
        # off-diagonals agree to the material's reciprocity mismatch (~0.1%)
        assert e[0, 1] == pytest.approx(e[1, 0], rel=1e-3)

    def test_zero_poisson_is_diagonal(self):
        mat = OrthotropicMaterial(5e9, 2e9, 1e9, 0.0, 0.0)
        assert np.allclose(constitutive_matrix(mat), np.diag([5e9, 2e9, 1e9]))

    def test_unit_material_is_identity(self):
        mat = OrthotropicMaterial(1.0, 1.0, 1.0, 0.0, 0.0)
        assert np.allclose(constitutive_matrix(mat), np.eye(3))

    @pytest.mark.parametrize("bad", [
        dict(e1=-1e9, e2=8e9, g12=4e9, nu12=0.3, nu21=0.06),
        dict(e1=1e9, e2=1e9, g12=1e9, nu12=1.2, nu21=1.2),  # 1 - nu12*nu21 < 0
        dict(e1=38.6e9, e2=8.27e9, g12=4.14e9, nu12=0.27, nu21=0.2),  # reciprocity
    ])
    def test_invalid_inputs_rejected(self, bad):
        with pytest.raises(MaterialError):
            OrthotropicMaterial(**bad)


class TestTransformMatrices:
    def test_identity_at_zero(self):
        t1, t2 = transform_matrices(0.0)
        assert np.allclose(t1, np.eye(3))
        assert np.allclose(t2, np.eye(3))

    def test_quarter_turn(self):
        t1, _ = transform_matrices(np.pi / 2)
        assert np.allclose(t1, [[0, 1, 0], [1, 0, 0], [0, 0, -1]], atol=1e-15)

    def test_45_degrees_first_row(self):
        t1, _ = transform_matrices(np.pi / 4)
        assert np.allclose(t1[0], [0.5, 0.5, 1.0])

    @pytest.mark.parametrize("theta", np.linspace(-np.pi, np.pi, 9))
    def test_unit_determinants(self, theta):
        t1, t2 = transform_matrices(theta)
        assert np.linalg.det(t1) == pytest.approx(1.0)
        assert np.linalg.det(t2) == pytest.approx(1.0)

    @pytest.mark.parametrize("theta", [0.3, -1.2, 2.9])
    def test_analytic_inverse_matches_numeric(self, theta):
        t1, _ = transform_matrices(theta)
        t1_inv, _ = transform_matrices(-theta)
        assert np.allclose(t1_inv, np.linalg.inv(t1), atol=1e-12)

    def test_broadcasts_over_angle_arrays(self):
        thetas = np.array([0.0, 0.4, -0.9])
        t1, t2 = transform_matrices(thetas)
        assert t1.shape == (3, 3, 3)
        single, _ = transform_matrices(0.4)
        assert np.allclose(t1[1], single)


class TestTransformedConstitutive:
    def test_zero_angle_returns_base(self):
        assert np.allclose(transformed_constitutive(EPOXY, 0.0),
                           constitutive_matrix(EPOXY))

    def test_quarter_turn_swaps_axes(self):
        ep = transformed_constitutive(EPOXY, np.pi / 2)
        e = constitutive_matrix(EPOXY)
        assert ep[0, 0] == pytest.approx(e[1, 1], rel=1e-9)
        assert ep[0, 0] == pytest.approx(8.401e9, rel=1e-4)

    def test_isotropic_invariant_under_rotation(self):
        mat = isotropic()
        base = constitutive_matrix(mat)
        scale = np.abs(base).max()
        for theta in np.linspace(-np.pi, np.pi, 32):
            ep = transformed_constitutive(mat, theta)
            assert np.abs(ep - base).max() <= 1e-12 * scale

    @pytest.mark.parametrize("theta", np.linspace(-np.pi, np.pi, 7))
    def test_symmetric_positive_definite_for_reciprocal_material(self, theta):
        ep = transformed_constitutive(reciprocal(), theta)
        scale = np.abs(ep).max()
        assert np.abs(ep - ep.T).max() <= 1e-10 * scale
        assert np.linalg.eigvalsh(0.5 * (ep + ep.T)).min() > 0

    @pytest.mark.parametrize("theta", [0.0, 0.7, -2.2])
    def test_pi_periodic(self, theta):
        a = transformed_constitutive(EPOXY, theta)
        b = transformed_constitutive(EPOXY, theta + np.pi)
        assert np.abs(a - b).max() <= 1e-12 * np.abs(a).max()


class TestTransformDerivatives:
    def test_strain_derivative_at_zero(self):
        _, dt2 = transform_derivatives(0.0)
        assert np.allclose(dt2, [[0, 0, 1], [0, 0, -1], [-2, 2, 0]])

    @pytest.mark.parametrize("theta", [0.0, 0.37, -1.41, 2.8])
    def test_matches_central_differences(self, theta):
        h = 1e-6
        dt1_inv, dt2 = transform_derivatives(theta)
        t1p, t2p = transform_matrices(theta + h)
        t1m, t2m = transform_matrices(theta - h)
        fd_t2 = (t2p - t2m) / (2 * h)
        t1ip, _ = transform_matrices(-(theta + h))
        t1im, _ = transform_matrices(-(theta - h))
        fd_t1_inv = (t1ip - t1im) / (2 * h)
        assert np.abs(fd_t2 - dt2).max() <= 1e-6 * max(1.0, np.abs(dt2).max())
        assert np.abs(fd_t1_inv - dt1_inv).max() <= 1e-6 * max(1.0, np.abs(dt1_inv).max())

    def test_pi_periodic(self, theta=0.83):
        a = transform_derivatives(theta)
        b = transform_derivatives(theta + np.pi)
        assert np.allclose(a[0], b[0], atol=1e-12)
        assert np.allclose(a[1], b[1], atol=1e-12)

    @pytest.mark.parametrize("theta", [0.2, -0.9])
    def test_constitutive_derivative_matches_fd(self, theta):
        h = 1e-6
        an = transformed_constitutive_derivative(EPOXY, theta)
        fd = (transformed_constitutive(EPOXY, theta + h)
              - transformed_constitutive(EPOXY, theta - h)) / (2 * h)
        assert np.abs(fd - an).max() <= 1e-6 * np.abs(an).max()
