"""Finite-difference validation of every analytic sensitivity path.

The oracle re-solves the full equilibrium problem at perturbed designs and
differences the objective or a frozen-cluster P-norm stress measure, making
it independent of the adjoint and chain-rule code it checks. Cluster
membership is frozen at the base design because it is a discrete function
of the stresses; the check therefore validates the smooth branch the
optimizer actually differentiates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem, stress
from .compliance import compliance_and_gradients
from .fem import DesignState
from .problems import (EPOXY_GLASS, MaterialConfig, Model, NodeLoad,
                       NodeSupport, ProblemConfig, StressLimits, build_model)

FUNCTIONS = ("compliance", "sigma1_pnorm", "sigma2_pnorm")
VAR_CLASSES = ("rho", "theta")
DEFAULT_TOL = 1e-3
DEFAULT_STEP = 1e-6
MAX_CHECK_ELEMS = 100  # repeated full re-solves; keep the model desk-sized


def build_check_model(nelx: int, nely: int, pnorm_power: int = 8) -> Model:
    """Small cantilever used by the gradient checks (no load-zone exclusion,
    so clusters may select any element)."""
    config = ProblemConfig(
        name=f"gradcheck_{nelx}x{nely}",
        geometry="cantilever",
        nelx=nelx,
        nely=nely,
        elem_size=1.0,
        thickness=1.0,
        material=MaterialConfig(**EPOXY_GLASS),
        supports=[NodeSupport(0, iy, "xy") for iy in range(nely + 1)],
        loads=[NodeLoad(nelx, 0, fy=-1e3)],
        volume_fraction=0.5,
        simp_power=3.0,
        pnorm_power=pnorm_power,
        stress_constraints=True,
        n_clusters=1,
        n_s=max(1, (nelx * nely) // 3),
        limits=StressLimits(60e3, 60e3, 20e3, 20e3),
        exclusion_rings=0,
    )
    model = build_model(config)
    model.excluded = np.empty(0, dtype=int)
    return model


def evaluate_function(model: Model, design: DesignState, function: str,
                      clusters: stress.ClusterSet) -> float:
    """Objective or frozen-cluster P-norm value at a design (full re-solve)."""
    cfg = model.config
    k = fem.assemble_stiffness(model.mesh, model.material, design, cfg.simp_power)
    solved = fem.solve_equilibrium(k, model.bc, model.force)
    if function == "compliance":
        return float(solved.u @ model.force)
    if function not in FUNCTIONS:
        raise ValueError(f"unknown function {function!r}")
    direction = 0 if function == "sigma1_pnorm" else 1
    field = fem.element_stresses(model.mesh, model.material, design, solved.u)
    limit = model.limits[direction]
    members = clusters.clusters[direction][0]
    sbar = stress.smooth_abs(field.values[members, direction],
                             stress.SMOOTHING_FACTOR * limit)
    return stress.pnorm(sbar, cfg.pnorm_power)


def central_difference(fn, x: np.ndarray, index: int, h: float,
                       lower: float | None = None,
                       upper: float | None = None) -> float:
    """Central difference of ``fn`` in coordinate ``index``; falls back to a
    one-sided difference within ``h`` of a bound."""
    x = np.asarray(x, dtype=float)
    xi = x[index]
    up_ok = upper is None or xi + h <= upper
    down_ok = lower is None or xi - h >= lower
    if up_ok and down_ok:
        return (_shifted(fn, x, index, h) - _shifted(fn, x, index, -h)) / (2.0 * h)
    if up_ok:
        return (_shifted(fn, x, index, h) - fn(x)) / h
    if down_ok:
        return (fn(x) - _shifted(fn, x, index, -h)) / h
    raise ValueError("finite-difference step does not fit inside the bounds")


def _shifted(fn, x, index, delta):
    xs = x.copy()
    xs[index] += delta
    return fn(xs)


def fd_gradient(model: Model, design: DesignState, function: str,
                var_class: str, index: int, h: float = DEFAULT_STEP,
                clusters: stress.ClusterSet | None = None) -> float:
    """Finite-difference derivative of one function w.r.t. one variable."""
    if model.mesh.n_elems > MAX_CHECK_ELEMS:
        raise ValueError("model too large for repeated finite differencing")
    if clusters is None:
        clusters = base_clusters(model, design)
    if var_class == "rho":
        def fn(r):
            return evaluate_function(model, DesignState(r, design.theta),
                                     function, clusters)
        return central_difference(fn, design.rho, index, h, lower=0.0, upper=1.0)
    if var_class == "theta":
        def fn(t):
            return evaluate_function(model, DesignState(design.rho, t),
                                     function, clusters)
        return central_difference(fn, design.theta, index, h,
                                  lower=-np.pi, upper=np.pi)
    raise ValueError(f"unknown variable class {var_class!r}")


def base_clusters(model: Model, design: DesignState) -> stress.ClusterSet:
    """Clusters built from the stress field at the base design."""
    cfg = model.config
    k = fem.assemble_stiffness(model.mesh, model.material, design, cfg.simp_power)
    solved = fem.solve_equilibrium(k, model.bc, model.force)
    field = fem.element_stresses(model.mesh, model.material, design, solved.u)
    smoothing = tuple(stress.SMOOTHING_FACTOR * lim for lim in model.limits)
    return stress.build_clusters(field, cfg.n_clusters, cfg.n_s,
                                 model.excluded, smoothing)


def analytic_gradients(model: Model, design: DesignState,
                       clusters: stress.ClusterSet) -> dict[str, dict[str, np.ndarray]]:
    """All implemented gradients, keyed [function][var_class]."""
    cfg = model.config
    k = fem.assemble_stiffness(model.mesh, model.material, design, cfg.simp_power)
    solved = fem.solve_equilibrium(k, model.bc, model.force)
    obj = compliance_and_gradients(model.mesh, model.material, design, solved,
                                   cfg.simp_power)
    block = stress.constraint_values_and_sensitivities(
        model.mesh, model.material, design, solved, clusters,
        cfg.pnorm_power, model.limits, cfg.simp_power)
    out = {"compliance": {"rho": obj.dc_drho, "theta": obj.dc_dtheta}}
    for name, direction in (("sigma1_pnorm", 1), ("sigma2_pnorm", 2)):
        row = int(np.nonzero((block.directions == direction) & (block.ranks == 0))[0][0])
        out[name] = {"rho": block.d_rho[row], "theta": block.d_theta[row]}
    return out


@dataclass
class GradCheckEntry:
    function: str
    var_class: str
    max_rel_error: float
    argmax_index: int
    step: float


@dataclass
class GradReport:
    entries: list[GradCheckEntry]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.max_rel_error < self.tolerance for e in self.entries)

    def format(self) -> str:
        lines = [f"{'function':<14} {'variable':<8} {'max rel err':>12} "
                 f"{'argmax':>7} {'step':>9}"]
        for e in self.entries:
            lines.append(f"{e.function:<14} {e.var_class:<8} "
                         f"{e.max_rel_error:>12.3e} {e.argmax_index:>7d} "
                         f"{e.step:>9.1e}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'} "
                     f"(tolerance {self.tolerance:.1e})")
        return "\n".join(lines)


def relative_errors(analytic: np.ndarray, fd: np.ndarray,
                    grad_scale: float) -> np.ndarray:
    """|fd - analytic| / max(|analytic|, 1e-12 * grad_scale) elementwise."""
    floor = 1e-12 * grad_scale
    return np.abs(fd - analytic) / np.maximum(np.abs(analytic), floor)


def run_gradcheck(nelx: int = 4, nely: int = 3, seed: int = 0,
                  n_probe: int = 20, h: float = DEFAULT_STEP,
                  tol: float = DEFAULT_TOL) -> GradReport:
    """Probe random variables of every gradient path against the FD oracle.

    The design is random with interior densities (rho in [0.3, 0.9], theta
    in (-pi, pi)); cluster membership is frozen at the base design. Fails
    when any probed relative error reaches ``tol``.
    """
    if nelx > 10 or nely > 10:
        raise ValueError("gradcheck meshes are limited to 10x10")
    model = build_check_model(nelx, nely)
    n = model.mesh.n_elems
    rng = np.random.default_rng(seed)
    design = DesignState(rng.uniform(0.3, 0.9, n),
                         rng.uniform(-np.pi, np.pi, n))
    clusters = base_clusters(model, design)
    grads = analytic_gradients(model, design, clusters)

    indices = {cls: np.sort(rng.choice(n, size=min(n_probe, n), replace=False))
               for cls in VAR_CLASSES}
    entries = []
    for function in FUNCTIONS:
        for var_class in VAR_CLASSES:
            analytic = grads[function][var_class]
            idx = indices[var_class]
            fd = np.array([fd_gradient(model, design, function, var_class,
                                       int(i), h, clusters) for i in idx])
            errors = relative_errors(analytic[idx], fd,
                                     np.abs(analytic).max())
            worst = int(np.argmax(errors))
            entries.append(GradCheckEntry(
                function=function, var_class=var_class,
                max_rel_error=float(errors[worst]),
                argmax_index=int(idx[worst]), step=h))
    return GradReport(entries=entries, tolerance=tol)
