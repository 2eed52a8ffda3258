"""Structured Q4 plane-stress finite element core.

Provides the rectangular mesh with an active-cell mask (L-shaped and other
subtractive domains), penalized stiffness assembly, the sparse direct
equilibrium solve, penalized stress recovery in principal material
coordinates, and adjoint solves reusing the stiffness factorization.

Node layout: node (ix, iy) sits at (ix*h, iy*h) with y pointing up; only
nodes touched by active elements receive indices. Each node carries the dof
pair (2n, 2n+1) for (ux, uy). Element corner order is counterclockwise from
the bottom-left, matching the strain-displacement matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage
import scipy.sparse
import scipy.sparse.linalg

from . import material
from .material import OrthotropicMaterial

RHO_FLOOR = 1e-4
RESIDUAL_RTOL = 1e-8

_CORNER_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_CORNER_ETA = np.array([-1.0, -1.0, 1.0, 1.0])
_GAUSS = 1.0 / math.sqrt(3.0)


class SolverError(RuntimeError):
    """The linear system could not be solved to the required residual."""


class MeshError(ValueError):
    """The requested mesh violates a structural invariant."""


def _b_matrix(xi: float, eta: float, elem_size: float) -> np.ndarray:
    """Strain-displacement matrix of a square bilinear quad at (xi, eta)."""
    dn_dx = 0.25 * _CORNER_XI * (1.0 + eta * _CORNER_ETA) * 2.0 / elem_size
    dn_dy = 0.25 * _CORNER_ETA * (1.0 + xi * _CORNER_XI) * 2.0 / elem_size
    b = np.zeros((3, 8))
    b[0, 0::2] = dn_dx
    b[1, 1::2] = dn_dy
    b[2, 0::2] = dn_dy
    b[2, 1::2] = dn_dx
    return b


def strain_displacement(elem_size: float) -> np.ndarray:
    """Centroid strain-displacement matrix; rows [eps_11, eps_22, gamma_12]."""
    if elem_size <= 0.0:
        raise ValueError("elem_size must be positive")
    return _b_matrix(0.0, 0.0, elem_size)


def _gauss_b_matrices(elem_size: float) -> np.ndarray:
    """B matrices at the four 2x2 Gauss points, shape (4, 3, 8)."""
    pts = ((-_GAUSS, -_GAUSS), (_GAUSS, -_GAUSS), (_GAUSS, _GAUSS), (-_GAUSS, _GAUSS))
    return np.stack([_b_matrix(xi, eta, elem_size) for xi, eta in pts])


def element_stiffness(mat: OrthotropicMaterial, theta, elem_size: float,
                      thickness: float) -> np.ndarray:
    """Element stiffness, 2x2 Gauss quadrature over a square Q4 element.

    ``theta`` may be a scalar (returns ``(8, 8)``) or an array of angles
    (returns ``(n, 8, 8)``). The result is symmetrized; any asymmetry can
    only come from a reciprocity mismatch in the material inputs.
    """
    bg = _gauss_b_matrices(elem_size)
    ep = material.transformed_constitutive(mat, theta)
    scale = thickness * (0.5 * elem_size) ** 2  # det J per Gauss point, unit weights
    k = scale * np.einsum("gai,...ab,gbj->...ij", bg, ep, bg, optimize=True)
    return 0.5 * (k + np.swapaxes(k, -1, -2))


def element_stiffness_angle_derivative(mat: OrthotropicMaterial, theta,
                                       elem_size: float, thickness: float) -> np.ndarray:
    """Analytic d(element stiffness)/d(theta); same shapes as element_stiffness."""
    bg = _gauss_b_matrices(elem_size)
    dep = material.transformed_constitutive_derivative(mat, theta)
    scale = thickness * (0.5 * elem_size) ** 2
    dk = scale * np.einsum("gai,...ab,gbj->...ij", bg, dep, bg, optimize=True)
    return 0.5 * (dk + np.swapaxes(dk, -1, -2))


@dataclass(eq=False)
class StructuredMesh:
    """Rectangular grid of square Q4 elements with an active-cell mask.

    ``active[ix, iy]`` marks cells that exist; the active region must be a
    single edge-connected component. Element order is ascending (ix, iy)
    over active cells and is the index space for all per-element arrays.
    """

    nelx: int
    nely: int
    elem_size: float = 1.0
    thickness: float = 1.0
    active: np.ndarray | None = None

    n_elems: int = field(init=False)
    n_nodes: int = field(init=False)
    n_dofs: int = field(init=False)
    elem_ix: np.ndarray = field(init=False)
    elem_iy: np.ndarray = field(init=False)
    elem_nodes: np.ndarray = field(init=False)
    elem_dofs: np.ndarray = field(init=False)
    grid_elem: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if self.nelx < 1 or self.nely < 1:
            raise MeshError("nelx and nely must be at least 1")
        if self.elem_size <= 0.0 or self.thickness <= 0.0:
            raise MeshError("elem_size and thickness must be positive")
        if self.active is None:
            self.active = np.ones((self.nelx, self.nely), dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool)
            if self.active.shape != (self.nelx, self.nely):
                raise MeshError("active mask shape must be (nelx, nely)")
        if not self.active.any():
            raise MeshError("mesh has no active elements")
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        _, n_comp = scipy.ndimage.label(self.active, structure=structure)
        if n_comp != 1:
            raise MeshError(f"active region has {n_comp} connected components")

        self.elem_ix, self.elem_iy = np.nonzero(self.active)
        self.n_elems = self.elem_ix.size
        ncol = self.nely + 1
        bl = self.elem_ix * ncol + self.elem_iy
        corners = np.stack([bl, bl + ncol, bl + ncol + 1, bl + 1], axis=1)
        used = np.unique(corners)
        self._full_to_compact = np.full((self.nelx + 1) * ncol, -1, dtype=int)
        self._full_to_compact[used] = np.arange(used.size)
        self.n_nodes = used.size
        self.n_dofs = 2 * self.n_nodes
        self.elem_nodes = self._full_to_compact[corners]
        self.elem_dofs = np.empty((self.n_elems, 8), dtype=int)
        self.elem_dofs[:, 0::2] = 2 * self.elem_nodes
        self.elem_dofs[:, 1::2] = 2 * self.elem_nodes + 1
        self.grid_elem = np.full((self.nelx, self.nely), -1, dtype=int)
        self.grid_elem[self.elem_ix, self.elem_iy] = np.arange(self.n_elems)
        self._assembly_rows = None
        self._assembly_cols = None

    @classmethod
    def rectangle(cls, nelx: int, nely: int, elem_size: float = 1.0,
                  thickness: float = 1.0) -> "StructuredMesh":
        return cls(nelx, nely, elem_size, thickness)

    def node_id(self, ix: int, iy: int) -> int:
        """Compact node index of grid node (ix, iy); raises if unused."""
        if not (0 <= ix <= self.nelx and 0 <= iy <= self.nely):
            raise MeshError(f"node ({ix}, {iy}) outside the grid")
        idx = self._full_to_compact[ix * (self.nely + 1) + iy]
        if idx < 0:
            raise MeshError(f"node ({ix}, {iy}) touches no active element")
        return int(idx)

    @property
    def assembly_rows(self) -> np.ndarray:
        if self._assembly_rows is None:
            self._assembly_rows = np.repeat(self.elem_dofs, 8, axis=1).ravel()
        return self._assembly_rows

    @property
    def assembly_cols(self) -> np.ndarray:
        if self._assembly_cols is None:
            self._assembly_cols = np.tile(self.elem_dofs, (1, 8)).ravel()
        return self._assembly_cols

    def elements_containing_nodes(self, node_ids) -> np.ndarray:
        """Active element indices having at least one of the given nodes."""
        mask = np.isin(self.elem_nodes, np.asarray(node_ids, dtype=int))
        return np.nonzero(mask.any(axis=1))[0]

    def edge_neighbors(self, elem_ids) -> np.ndarray:
        """Active elements sharing an edge with any of ``elem_ids``."""
        elem_ids = np.asarray(elem_ids, dtype=int)
        out = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jx = self.elem_ix[elem_ids] + dx
            jy = self.elem_iy[elem_ids] + dy
            ok = (jx >= 0) & (jx < self.nelx) & (jy >= 0) & (jy < self.nely)
            nb = self.grid_elem[jx[ok], jy[ok]]
            out.append(nb[nb >= 0])
        return np.unique(np.concatenate(out)) if out else np.empty(0, dtype=int)


@dataclass
class BoundaryConditions:
    """Fixed dofs plus point loads given as a dof -> force (N) map."""

    fixed_dofs: np.ndarray
    loads: dict[int, float]

    def __post_init__(self) -> None:
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=int))

    def validate(self, mesh: StructuredMesh) -> None:
        if self.fixed_dofs.size < 3:
            raise MeshError("at least 3 constrained dofs are required")
        if self.fixed_dofs.size and (self.fixed_dofs.min() < 0
                                     or self.fixed_dofs.max() >= mesh.n_dofs):
            raise MeshError("fixed dof index out of range")
        loaded = set(self.loads)
        if loaded & set(self.fixed_dofs.tolist()):
            raise MeshError("loaded dofs must not be fixed")

    def force_vector(self, mesh: StructuredMesh) -> np.ndarray:
        f = np.zeros(mesh.n_dofs)
        for dof, value in self.loads.items():
            f[dof] += value
        return f


@dataclass
class DesignState:
    """Per-element density in [0, 1] and fiber angle in [-pi, pi] (rad)."""

    rho: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        self.rho = np.asarray(self.rho, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)

    def validate(self, mesh: StructuredMesh) -> None:
        if self.rho.shape != (mesh.n_elems,) or self.theta.shape != (mesh.n_elems,):
            raise ValueError("design fields must have one entry per active element")
        if self.rho.min() < 0.0 or self.rho.max() > 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.theta.min() < -np.pi or self.theta.max() > np.pi:
            raise ValueError("theta must lie in [-pi, pi]")


@dataclass
class StressField:
    """Per-element penalized stresses in principal material coordinates (Pa)."""

    values: np.ndarray  # (n_elems, 3): sigma1, sigma2, tau12

    @property
    def sigma1(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def sigma2(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def tau12(self) -> np.ndarray:
        return self.values[:, 2]


def assemble_stiffness(mesh: StructuredMesh, mat: OrthotropicMaterial,
                       design: DesignState, p: float,
                       rho_floor: float = RHO_FLOOR,
                       ke: np.ndarray | None = None) -> scipy.sparse.csc_matrix:
    """Global stiffness K = sum_e max(rho_e, floor)^p k_e(theta_e).

    The floor keeps K nonsingular for rho = 0, which the design bounds allow.
    ``ke`` may pass precomputed per-element stiffness matrices.
    """
    if p < 1.0:
        raise ValueError("penalization power p must be >= 1")
    if ke is None:
        ke = element_stiffness(mat, design.theta, mesh.elem_size, mesh.thickness)
    eta = np.maximum(design.rho, rho_floor) ** p
    vals = (eta[:, None, None] * ke).ravel()
    k = scipy.sparse.coo_matrix(
        (vals, (mesh.assembly_rows, mesh.assembly_cols)),
        shape=(mesh.n_dofs, mesh.n_dofs),
    )
    return k.tocsc()


@dataclass
class SolvedState:
    """Equilibrium displacements plus the reusable sparse factorization."""

    u: np.ndarray
    free_dofs: np.ndarray
    factor: object
    stiffness: scipy.sparse.csc_matrix
    force: np.ndarray

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        lam = np.zeros_like(self.u)
        lam[self.free_dofs] = self.factor.solve(rhs[self.free_dofs])
        return lam


def solve_equilibrium(k: scipy.sparse.csc_matrix, bc: BoundaryConditions,
                      force: np.ndarray) -> SolvedState:
    """Factorize K on the free dofs and solve K u = F.

    The LU factorization is retained on the returned state so adjoint
    solves reuse it. Residuals above ``RESIDUAL_RTOL * max|F|`` trigger one
    refinement step and then a SolverError.
    """
    n = k.shape[0]
    free = np.setdiff1d(np.arange(n), bc.fixed_dofs, assume_unique=False)
    kff = k[free][:, free].tocsc()
    try:
        factor = scipy.sparse.linalg.splu(kff)
    except RuntimeError as exc:
        raise SolverError(f"stiffness factorization failed: {exc}") from exc
    ff = force[free]
    uf = factor.solve(ff)
    fref = np.abs(force).max() if force.size else 0.0
    if fref > 0.0:
        resid = np.abs(kff @ uf - ff).max()
        if resid > RESIDUAL_RTOL * fref:
            uf = uf + factor.solve(ff - kff @ uf)
            resid = np.abs(kff @ uf - ff).max()
            if resid > RESIDUAL_RTOL * fref:
                raise SolverError(
                    f"equilibrium residual {resid:.3e} exceeds "
                    f"{RESIDUAL_RTOL:.1e} * max|F| = {RESIDUAL_RTOL * fref:.3e}"
                )
    u = np.zeros(n)
    u[free] = uf
    return SolvedState(u=u, free_dofs=free, factor=factor, stiffness=k, force=force)


def adjoint_solve(solved: SolvedState, rhs: np.ndarray) -> np.ndarray:
    """Solve K lambda = rhs with the stored factorization (fixed dofs zero)."""
    return solved.solve_adjoint(rhs)


def raw_element_stresses(mesh: StructuredMesh, mat: OrthotropicMaterial,
                         theta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Unpenalized centroid stresses E T2(theta) B u in material coordinates."""
    b0 = strain_displacement(mesh.elem_size)
    strains = u[mesh.elem_dofs] @ b0.T
    _, t2 = material.transform_matrices(theta)
    rotated = np.einsum("nij,nj->ni", t2, strains)
    return rotated @ material.constitutive_matrix(mat).T


def element_stresses(mesh: StructuredMesh, mat: OrthotropicMaterial,
                     design: DesignState, u: np.ndarray) -> StressField:
    """Penalized stresses sqrt(rho) E T2 B u; vanish smoothly as rho -> 0."""
    raw = raw_element_stresses(mesh, mat, design.theta, u)
    return StressField(np.sqrt(design.rho)[:, None] * raw)
