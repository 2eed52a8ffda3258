"""Outer optimization loop: FE analysis, sensitivity evaluation, filtering,
and MMA stepping until the density field settles.

Per iteration: assemble and factorize the stiffness, solve equilibrium,
recover penalized stresses, rebuild the stress clusters, evaluate the
objective and every constraint with gradients, filter the density
sensitivities, take one MMA step, and stop once the largest density change
drops below the tolerance (angle changes do not enter the stop rule).

The compliance handed to the optimizer is scaled by its first-iteration
value so objective and normalized constraints stay comparable in magnitude.
The whole pipeline is deterministic: identical configs produce identical
histories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import fem, filtering, stress
from .compliance import compliance_and_gradients
from .fem import DesignState, StressField
from .mma import MmaState, mma_subproblem
from .problems import Model, ProblemConfig, build_model

MAX_TRACKED_CONSTRAINTS = 4  # history columns g1..g4, NaN-padded


class IterationInfo(NamedTuple):
    iteration: int
    compliance: float
    volume: float
    stress_constraints: np.ndarray
    max_sigma1: float
    max_sigma2: float
    change: float


@dataclass
class OptimizationResult:
    """Final design and per-iteration histories of an optimization run."""

    config: ProblemConfig
    rho: np.ndarray
    theta: np.ndarray
    stress: StressField
    compliance: float
    volume: float
    iterations: int
    status: str  # "converged" | "max_iter"
    compliance_history: np.ndarray
    constraint_history: np.ndarray  # (iterations, MAX_TRACKED_CONSTRAINTS)
    volume_history: np.ndarray
    max_sigma1_history: np.ndarray
    max_sigma2_history: np.ndarray

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _analyze(model: Model, design: DesignState):
    """Assemble, factorize, and solve one FE state for the given design."""
    cfg = model.config
    ke = fem.element_stiffness(model.material, design.theta,
                               model.mesh.elem_size, model.mesh.thickness)
    dke = fem.element_stiffness_angle_derivative(
        model.material, design.theta, model.mesh.elem_size, model.mesh.thickness)
    k = fem.assemble_stiffness(model.mesh, model.material, design,
                               cfg.simp_power, ke=ke)
    solved = fem.solve_equilibrium(k, model.bc, model.force)
    field = fem.element_stresses(model.mesh, model.material, design, solved.u)
    return ke, dke, solved, field


def run_optimization(config: ProblemConfig,
                     progress: Callable[[IterationInfo], None] | None = None,
                     ) -> OptimizationResult:
    """Run the full optimization described by ``config``."""
    model = build_model(config)
    mesh = model.mesh
    n = mesh.n_elems
    design = DesignState(np.full(n, config.rho_init), np.full(n, config.theta_init))
    design.validate(mesh)

    n_stress = 2 * config.n_clusters if config.stress_constraints else 0
    m = 1 + n_stress
    lower = np.concatenate([np.zeros(n), np.full(n, -np.pi)])
    upper = np.concatenate([np.ones(n), np.full(n, np.pi)])
    move = np.concatenate([np.full(n, config.move_rho),
                           np.full(n, config.move_theta)])
    state = MmaState(lower, upper, move, n_constraints=m,
                     asy_init=config.asy_init, asy_incr=config.asy_incr,
                     asy_decr=config.asy_decr)
    kernel = filtering.build_kernel(mesh, config.r_min)
    smoothing = (stress.SMOOTHING_FACTOR * model.limits[0],
                 stress.SMOOTHING_FACTOR * model.limits[1])
    volume_grad = np.full(n, 1.0 / (n * config.volume_fraction))

    c_scale = None
    hist_c, hist_g, hist_vol, hist_s1, hist_s2 = [], [], [], [], []
    status = "max_iter"
    iterations = config.max_iter

    for it in range(1, config.max_iter + 1):
        ke, dke, solved, field = _analyze(model, design)
        obj = compliance_and_gradients(mesh, model.material, design, solved,
                                       config.simp_power, ke=ke, dke=dke)
        if c_scale is None:
            c_scale = 1.0 / obj.c if obj.c > 0.0 else 1.0
        volume = float(design.rho.mean())

        g = np.empty(m)
        dg = np.empty((m, 2 * n))
        g[0] = volume / config.volume_fraction - 1.0
        dg[0, :n] = volume_grad
        dg[0, n:] = 0.0
        g_stress = np.full(MAX_TRACKED_CONSTRAINTS, np.nan)
        if config.stress_constraints:
            clusters = stress.build_clusters(field, config.n_clusters, config.n_s,
                                             model.excluded, smoothing)
            block = stress.constraint_values_and_sensitivities(
                mesh, model.material, design, solved, clusters,
                config.pnorm_power, model.limits, config.simp_power,
                ke=ke, dke=dke)
            for j in range(n_stress):
                limit = block.limits[j]
                g[1 + j] = block.normalized[j]
                dg[1 + j, :n] = filtering.filter_density_sensitivities(
                    kernel, design.rho, block.d_rho[j]) / limit
                dg[1 + j, n:] = block.d_theta[j] / limit
            g_stress[:n_stress] = block.normalized

        df0 = np.concatenate([
            filtering.filter_density_sensitivities(kernel, design.rho, obj.dc_drho),
            obj.dc_dtheta,
        ]) * c_scale

        x = np.concatenate([design.rho, design.theta])
        x_new = mma_subproblem(state, x, obj.c * c_scale, df0, g, dg)
        change = float(np.abs(x_new[:n] - design.rho).max())

        hist_c.append(obj.c)
        hist_g.append(g_stress)
        hist_vol.append(volume)
        hist_s1.append(float(np.abs(field.sigma1).max()))
        hist_s2.append(float(np.abs(field.sigma2).max()))
        if progress is not None:
            progress(IterationInfo(it, obj.c, volume, g_stress,
                                   hist_s1[-1], hist_s2[-1], change))

        design = DesignState(x_new[:n], x_new[n:])
        if change < config.conv_tol:
            status = "converged"
            iterations = it
            break
    else:
        iterations = config.max_iter

    _, _, solved, field = _analyze(model, design)
    final_c = float(solved.u @ model.force)
    return OptimizationResult(
        config=config,
        rho=design.rho,
        theta=design.theta,
        stress=field,
        compliance=final_c,
        volume=float(design.rho.mean()),
        iterations=iterations,
        status=status,
        compliance_history=np.array(hist_c),
        constraint_history=np.array(hist_g),
        volume_history=np.array(hist_vol),
        max_sigma1_history=np.array(hist_s1),
        max_sigma2_history=np.array(hist_s2),
    )
