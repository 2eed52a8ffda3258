"""Compliance objective and its analytic design sensitivities.

The objective is self-adjoint: both gradients follow from the equilibrium
solution without any extra linear solve. Signs follow the convention that
the values handed to the optimizer are descent information for minimizing
compliance: adding stiffness (raising rho) never increases compliance, so
the density gradient is nonpositive elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import DesignState, SolvedState, StructuredMesh
from .material import OrthotropicMaterial


@dataclass
class ObjectiveResult:
    """Compliance (N*m) and per-element gradients w.r.t. rho and theta."""

    c: float
    dc_drho: np.ndarray
    dc_dtheta: np.ndarray


def compliance_and_gradients(mesh: StructuredMesh, mat: OrthotropicMaterial,
                             design: DesignState, solved: SolvedState, p: float,
                             rho_floor: float = fem.RHO_FLOOR,
                             ke: np.ndarray | None = None,
                             dke: np.ndarray | None = None) -> ObjectiveResult:
    """Compliance sum_e eta_K(rho_e) u_e^T k_e u_e and its gradients.

    dc/drho_e = -p rho_e^(p-1) u_e^T k_e u_e and
    dc/dtheta_e = -eta_K(rho_e) u_e^T dk_e/dtheta u_e, both consistent with
    the floored stiffness interpolation used in assembly (the rho gradient
    is zero below the floor, where eta_K is constant).
    """
    if ke is None:
        ke = fem.element_stiffness(mat, design.theta, mesh.elem_size, mesh.thickness)
    if dke is None:
        dke = fem.element_stiffness_angle_derivative(
            mat, design.theta, mesh.elem_size, mesh.thickness)
    ue = solved.u[mesh.elem_dofs]
    uku = np.einsum("ni,nij,nj->n", ue, ke, ue, optimize=True)
    ukdu = np.einsum("ni,nij,nj->n", ue, dke, ue, optimize=True)
    rho_eff = np.maximum(design.rho, rho_floor)
    eta = rho_eff**p
    deta = np.where(design.rho >= rho_floor, p * rho_eff ** (p - 1.0), 0.0)
    c = float(eta @ uku)
    return ObjectiveResult(c=c, dc_drho=-deta * uku, dc_dtheta=-eta * ukdu)
