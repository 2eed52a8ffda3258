"""Clustered P-norm stress measures and their adjoint sensitivities.

Stresses are constrained separately in the two principal material
directions. Per direction, evaluation points (element centroids) are ranked
by descending smoothed stress magnitude and the top ``n_s`` points form the
first cluster, the next ``n_s`` the second, and so on; only the leading
clusters are constrained. Each constrained cluster contributes one P-norm
value, one adjoint solve, and one full gradient pair (rho, theta).

Cluster membership is a discrete function of the design. Callers rebuild
clusters once per outer iteration and treat them as frozen while gradients
and the optimizer step are evaluated, which keeps the per-iteration problem
smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fem, material
from .fem import DesignState, SolvedState, StressField, StructuredMesh
from .material import OrthotropicMaterial

# Smoothing scale of the absolute value, as a fraction of the stress limit.
SMOOTHING_FACTOR = 1e-6
# Minimum cluster size as a fraction of the active element count.
MIN_CLUSTER_FRACTION = 0.025


def smooth_abs(sigma, eps: float = 0.0) -> np.ndarray:
    """Smoothed magnitude sqrt(sigma^2 + eps^2); exact |sigma| for eps = 0."""
    sigma = np.asarray(sigma, dtype=float)
    return np.sqrt(sigma * sigma + eps * eps)


def smooth_abs_derivative(sigma, eps: float = 0.0) -> np.ndarray:
    """d(smooth_abs)/d(sigma) = sigma / sqrt(sigma^2 + eps^2), 0 at sigma = 0."""
    sigma = np.asarray(sigma, dtype=float)
    mag = np.sqrt(sigma * sigma + eps * eps)
    return np.divide(sigma, mag, out=np.zeros_like(sigma), where=mag > 0.0)


def pnorm(values, power: int) -> float:
    """Cluster P-norm ((1/N) sum v^P)^(1/P) for even P >= 2.

    Never exceeds the largest magnitude in the cluster and approaches it as
    P grows. Scaled by the peak internally so large P does not overflow.
    """
    if power < 2 or power % 2 != 0:
        raise ValueError("P-norm power must be an even integer >= 2")
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("P-norm of an empty cluster is undefined")
    peak = float(v.max())
    if peak == 0.0:
        return 0.0
    return peak * float(np.mean((v / peak) ** power)) ** (1.0 / power)


@dataclass
class ClusterSet:
    """Ordered stress-evaluation-point clusters per principal direction.

    ``clusters[i][r]`` holds the element indices of rank-``r`` cluster in
    direction ``i`` (0: along fibers, 1: transverse), disjoint within a
    direction. ``excluded`` lists points barred from every cluster (the
    load-application zone).
    """

    clusters: tuple[tuple[np.ndarray, ...], ...]
    n_s: int
    excluded: np.ndarray


def build_clusters(stress: StressField, n_clusters: int, n_s: int,
                   excluded=None, smoothing_eps: tuple[float, float] = (0.0, 0.0),
                   ) -> ClusterSet:
    """Rank points by descending smoothed |sigma_i| and chunk into clusters.

    Ties rank the lower element index first. The last cluster may come up
    short only when the eligible points are exhausted.
    """
    n = stress.values.shape[0]
    if n_clusters not in (1, 2):
        raise ValueError("n_clusters per direction must be 1 or 2")
    min_ns = math.ceil(MIN_CLUSTER_FRACTION * n)
    if n_s < min_ns:
        raise ValueError(
            f"n_s = {n_s} is below the minimum cluster size {min_ns} "
            f"(2.5% of {n} evaluation points)")
    excluded = np.unique(np.asarray(excluded, dtype=int)) if excluded is not None \
        else np.empty(0, dtype=int)
    eligible = np.setdiff1d(np.arange(n), excluded, assume_unique=True)
    per_direction = []
    for i in (0, 1):
        sbar = smooth_abs(stress.values[eligible, i], smoothing_eps[i])
        order = eligible[np.argsort(-sbar, kind="stable")]
        ranks = []
        for r in range(n_clusters):
            members = order[r * n_s:(r + 1) * n_s]
            if members.size == 0:
                raise ValueError(
                    f"cluster {r} in direction {i + 1} is empty: only "
                    f"{eligible.size} eligible points for {n_clusters} x {n_s}")
            ranks.append(members)
        per_direction.append(tuple(ranks))
    return ClusterSet(clusters=tuple(per_direction), n_s=n_s, excluded=excluded)


@dataclass
class ConstraintBlock:
    """P-norm stress constraint values, limits, and full gradients.

    Rows are ordered direction-major: all clusters of direction 1 by rank,
    then direction 2. ``values`` and the gradients are in raw stress units;
    ``normalized`` holds value/limit - 1, the form handed to the optimizer.
    """

    values: np.ndarray
    limits: np.ndarray
    normalized: np.ndarray
    d_rho: np.ndarray
    d_theta: np.ndarray
    directions: np.ndarray
    ranks: np.ndarray


def constraint_values_and_sensitivities(
        mesh: StructuredMesh, mat: OrthotropicMaterial, design: DesignState,
        solved: SolvedState, clusters: ClusterSet, power: int,
        limits: tuple[float, float], simp_power: float,
        rho_floor: float = fem.RHO_FLOOR,
        ke: np.ndarray | None = None,
        dke: np.ndarray | None = None) -> ConstraintBlock:
    """Evaluate every constrained cluster and its adjoint-based gradients.

    Per cluster the gradient splits into the explicit part (the direct
    dependence of the penalized member stresses on rho_e through the
    sqrt(rho) penalization and on theta_e through the strain rotation) and
    the implicit part -lambda^T dK/dx_e u_e from the displacement
    dependence, with one adjoint solve per cluster reusing the equilibrium
    factorization. The sqrt-penalization derivative is clamped at the
    density floor; elements that low carry vanishing stress and never rank
    into a constrained cluster.
    """
    if ke is None:
        ke = fem.element_stiffness(mat, design.theta, mesh.elem_size, mesh.thickness)
    if dke is None:
        dke = fem.element_stiffness_angle_derivative(
            mat, design.theta, mesh.elem_size, mesh.thickness)
    n = mesh.n_elems
    b0 = fem.strain_displacement(mesh.elem_size)
    ue = solved.u[mesh.elem_dofs]
    strains = ue @ b0.T
    e_mat = material.constitutive_matrix(mat)
    _, t2 = material.transform_matrices(design.theta)
    _, dt2 = material.transform_derivatives(design.theta)
    raw = np.einsum("nij,nj->ni", t2, strains) @ e_mat.T
    raw_dtheta = np.einsum("nij,nj->ni", dt2, strains) @ e_mat.T
    eta_s = np.sqrt(design.rho)
    sig = eta_s[:, None] * raw

    rho_eff = np.maximum(design.rho, rho_floor)
    deta_s = 0.5 / np.sqrt(rho_eff)
    eta_k = rho_eff**simp_power
    deta_k = np.where(design.rho >= rho_floor,
                      simp_power * rho_eff ** (simp_power - 1.0), 0.0)

    values, norm, lims, d_rhos, d_thetas, dirs, rks = [], [], [], [], [], [], []
    for i in (0, 1):
        limit = float(limits[i])
        if limit <= 0.0:
            raise ValueError("stress limits must be positive")
        eps = SMOOTHING_FACTOR * limit
        e_row = e_mat[i, :]
        for rank, members in enumerate(clusters.clusters[i]):
            s_m = sig[members, i]
            sbar = smooth_abs(s_m, eps)
            value = pnorm(sbar, power)
            d_rho = np.zeros(n)
            d_theta = np.zeros(n)
            if value > 0.0:
                # w_a = dS/dsbar_a * dsbar_a/dsigma_a over the cluster
                w = ((sbar / value) ** (power - 1) / members.size
                     * smooth_abs_derivative(s_m, eps))
                d_rho[members] = w * deta_s[members] * raw[members, i]
                d_theta[members] = w * eta_s[members] * raw_dtheta[members, i]
                # adjoint right-hand side: sum_a w_a eta_S(rho_a) B^T T2_a^T E_i^T
                rhs = np.zeros(mesh.n_dofs)
                contrib = np.einsum("nji,j->ni", t2[members], e_row) @ b0
                np.add.at(rhs, mesh.elem_dofs[members],
                          (w * eta_s[members])[:, None] * contrib)
                lam = fem.adjoint_solve(solved, rhs)
                le = lam[mesh.elem_dofs]
                d_rho -= deta_k * np.einsum("ni,nij,nj->n", le, ke, ue, optimize=True)
                d_theta -= eta_k * np.einsum("ni,nij,nj->n", le, dke, ue, optimize=True)
            values.append(value)
            norm.append(value / limit - 1.0)
            lims.append(limit)
            d_rhos.append(d_rho)
            d_thetas.append(d_theta)
            dirs.append(i + 1)
            rks.append(rank)
    return ConstraintBlock(
        values=np.array(values),
        limits=np.array(lims),
        normalized=np.array(norm),
        d_rho=np.array(d_rhos),
        d_theta=np.array(d_thetas),
        directions=np.array(dirs),
        ranks=np.array(rks),
    )
