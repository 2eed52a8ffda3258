"""Orthotropic plane-stress constitutive law and its coordinate transforms.

Conventions used throughout the package:

* Voigt order is [11, 22, 12] with engineering shear strain (gamma = 2 eps_12).
* ``theta`` is the fiber angle in radians, measured counterclockwise from the
  global x axis to the first principal material axis.
* Transform matrices are plain ``(3, 3)`` ndarrays; all functions broadcast
  over leading axes of ``theta`` and then return ``(..., 3, 3)``.

All functions are pure and may be called concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RECIPROCITY_TOL = 1e-3


class MaterialError(ValueError):
    """Inputs do not define a valid plane-stress constitutive law."""


@dataclass(frozen=True)
class OrthotropicMaterial:
    """Plane-stress orthotropic material.

    Attributes:
        e1: Young's modulus along the fibers (Pa).
        e2: Young's modulus transverse to the fibers (Pa).
        g12: In-plane shear modulus (Pa).
        nu12: Major Poisson ratio.
        nu21: Minor Poisson ratio. Redundant for a thermodynamically
            consistent material (nu21 * e1 == nu12 * e2); it is accepted as
            an input but rejected when it violates that identity by more
            than ``RECIPROCITY_TOL`` relative.
    """

    e1: float
    e2: float
    g12: float
    nu12: float
    nu21: float

    def __post_init__(self) -> None:
        if min(self.e1, self.e2, self.g12) <= 0.0:
            raise MaterialError("moduli e1, e2, g12 must be positive")
        if 1.0 - self.nu12 * self.nu21 <= 0.0:
            raise MaterialError(
                "1 - nu12*nu21 must be positive for a positive definite "
                "constitutive matrix"
            )
        mismatch = abs(self.nu21 * self.e1 - self.nu12 * self.e2)
        if mismatch > RECIPROCITY_TOL * abs(self.nu12 * self.e2):
            raise MaterialError(
                "Poisson ratios violate reciprocity nu21*e1 == nu12*e2 "
                f"(relative mismatch {mismatch / abs(self.nu12 * self.e2):.2e})"
            )


def constitutive_matrix(mat: OrthotropicMaterial) -> np.ndarray:
    """Constitutive matrix in principal material coordinates.

    Built literally from the five engineering constants; any reciprocity
    mismatch in (nu12, nu21) shows up as a small asymmetry between the two
    off-diagonal entries.
    """
    den = 1.0 - mat.nu12 * mat.nu21
    e = np.zeros((3, 3))
    e[0, 0] = mat.e1 / den
    e[0, 1] = mat.nu12 * mat.e2 / den
    e[1, 0] = mat.nu21 * mat.e1 / den
    e[1, 1] = mat.e2 / den
    e[2, 2] = mat.g12
    return e


def transform_matrices(theta) -> tuple[np.ndarray, np.ndarray]:
    """Stress and strain transformation matrices (T1, T2) at angle theta.

    T1 rotates stress vectors and T2 strain vectors (engineering shear)
    from global to material axes. Both have unit determinant and satisfy
    T1(theta)^-1 == T1(-theta) and T2(theta) == T1(-theta)^T.
    """
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    c2, s2, cs = c * c, s * s, c * s
    t1 = np.empty(theta.shape + (3, 3))
    t1[..., 0, 0] = c2
    t1[..., 0, 1] = s2
    t1[..., 0, 2] = 2.0 * cs
    t1[..., 1, 0] = s2
    t1[..., 1, 1] = c2
    t1[..., 1, 2] = -2.0 * cs
    t1[..., 2, 0] = -cs
    t1[..., 2, 1] = cs
    t1[..., 2, 2] = c2 - s2
    t2 = np.empty_like(t1)
    t2[..., 0, 0] = c2
    t2[..., 0, 1] = s2
    t2[..., 0, 2] = cs
    t2[..., 1, 0] = s2
    t2[..., 1, 1] = c2
    t2[..., 1, 2] = -cs
    t2[..., 2, 0] = -2.0 * cs
    t2[..., 2, 1] = 2.0 * cs
    t2[..., 2, 2] = c2 - s2
    return t1, t2


def transformed_constitutive(mat: OrthotropicMaterial, theta) -> np.ndarray:
    """Constitutive matrix rotated to global axes: T1(theta)^-1 E T2(theta).

    The inverse is formed analytically as T1(-theta). The result is
    pi-periodic in theta and, for reciprocally consistent inputs, symmetric
    positive definite.
    """
    e = constitutive_matrix(mat)
    t1_inv, _ = transform_matrices(np.negative(theta))
    _, t2 = transform_matrices(theta)
    return t1_inv @ e @ t2


def transform_derivatives(theta) -> tuple[np.ndarray, np.ndarray]:
    """Analytic angle derivatives of T1(theta)^-1 and T2(theta)."""
    theta = np.asarray(theta, dtype=float)
    s2t, c2t = np.sin(2.0 * theta), np.cos(2.0 * theta)
    dt1_inv = np.empty(theta.shape + (3, 3))
    dt1_inv[..., 0, 0] = -s2t
    dt1_inv[..., 0, 1] = s2t
    dt1_inv[..., 0, 2] = -2.0 * c2t
    dt1_inv[..., 1, 0] = s2t
    dt1_inv[..., 1, 1] = -s2t
    dt1_inv[..., 1, 2] = 2.0 * c2t
    dt1_inv[..., 2, 0] = c2t
    dt1_inv[..., 2, 1] = -c2t
    dt1_inv[..., 2, 2] = -2.0 * s2t
    dt2 = np.empty_like(dt1_inv)
    dt2[..., 0, 0] = -s2t
    dt2[..., 0, 1] = s2t
    dt2[..., 0, 2] = c2t
    dt2[..., 1, 0] = s2t
    dt2[..., 1, 1] = -s2t
    dt2[..., 1, 2] = -c2t
    dt2[..., 2, 0] = -2.0 * c2t
    dt2[..., 2, 1] = 2.0 * c2t
    dt2[..., 2, 2] = -2.0 * s2t
    return dt1_inv, dt2


def transformed_constitutive_derivative(mat: OrthotropicMaterial, theta) -> np.ndarray:
    """Angle derivative of the rotated constitutive matrix.

    d(T1^-1 E T2)/dtheta = dT1^-1/dtheta E T2 + T1^-1 E dT2/dtheta.
    """
    e = constitutive_matrix(mat)
    t1_inv, _ = transform_matrices(np.negative(theta))
    _, t2 = transform_matrices(theta)
    dt1_inv, dt2 = transform_derivatives(theta)
    return dt1_inv @ e @ t2 + t1_inv @ e @ dt2
