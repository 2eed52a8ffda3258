"""Method of moving asymptotes.

Sequential strictly convex separable approximations with adaptive
asymptotes, after

    Svanberg, K. (1987). The method of moving asymptotes - a new method for
    structural optimization. Int. J. Numer. Meth. Engng 24, 359-373.

Each call to :func:`mma_subproblem` builds the approximation

    minimize    f0~(x) + a0 z + sum(c_i y_i + 0.5 d_i y_i^2)
    subject to  fi~(x) - a_i z - y_i <= 0,   i = 1..m
                alfa_j <= x_j <= beta_j,     y >= 0, z >= 0

around the current iterate and solves it by maximizing the dual: the
approximation is separable, so for fixed multipliers every variable has a
closed-form minimizer, and the dual is a smooth concave function of the m
multipliers (m is tiny here: volume plus a few stress clusters) maximized
with a projected Newton iteration. The elastic variables y keep every
subproblem feasible; when they stay positive at the solution the returned
point is the least-infeasible one and the state is flagged.

Constraint values must arrive in normalized ``g(x) <= 0`` form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_RAA0 = 1e-5
_ALBEFA = 0.1
_ASY_CLAMP_WIDE = 10.0
_ASY_CLAMP_TIGHT = 1e-4  # lets persistent oscillations damp to ~1e-4 of range
_FEASIBILITY_SLACK = 1e-6
_DUAL_MAX_ITER = 200


@dataclass
class MmaState:
    """Mutable optimizer state carried across outer iterations.

    Attributes:
        lower, upper: box bounds per variable.
        move: absolute move limit per variable (e.g. 0.2 for densities,
            0.2 rad for angles).
        n_constraints: number of general constraints m.
        asy_init, asy_incr, asy_decr: asymptote adaptation parameters.
        c_penalty: weight of the elastic constraint-violation variables.
        kkt_tol: target subproblem KKT residual.
    """

    lower: np.ndarray
    upper: np.ndarray
    move: np.ndarray
    n_constraints: int
    asy_init: float = 0.5
    asy_incr: float = 1.2
    asy_decr: float = 0.7
    c_penalty: float = 1000.0
    kkt_tol: float = 1e-9
    iteration: int = 0
    low: np.ndarray = field(default=None, repr=False)
    upp: np.ndarray = field(default=None, repr=False)
    x_prev1: np.ndarray = field(default=None, repr=False)
    x_prev2: np.ndarray = field(default=None, repr=False)
    subproblem_feasible: bool = True
    last_kkt_residual: float = 0.0

    def __post_init__(self) -> None:
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.move = np.broadcast_to(np.asarray(self.move, dtype=float),
                                    self.lower.shape).copy()
        if np.any(self.upper <= self.lower):
            raise ValueError("upper bounds must exceed lower bounds")


def mma_subproblem(state: MmaState, x: np.ndarray, f0: float, df0: np.ndarray,
                   g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """One MMA iteration: build the convex approximation and solve it.

    Args:
        state: optimizer state; updated in place (asymptotes, history).
        x: current iterate, shape (n,).
        f0: objective value at x (unused by the approximation, kept for a
            conventional signature).
        df0: objective gradient, shape (n,).
        g: constraint values in g <= 0 form, shape (m,).
        dg: constraint Jacobian, shape (m, n).

    Returns:
        The subproblem minimizer, inside box bounds and move limits.
    """
    del f0
    x = np.asarray(x, dtype=float)
    df0 = np.asarray(df0, dtype=float)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    dg = np.asarray(dg, dtype=float).reshape(g.size, x.size)
    if g.size != state.n_constraints:
        raise ValueError(f"expected {state.n_constraints} constraints, got {g.size}")
    n = x.size
    state.iteration += 1
    xmin, xmax = state.lower, state.upper
    rng = np.maximum(xmax - xmin, 1e-5)

    if state.iteration <= 2 or state.x_prev2 is None:
        low = x - state.asy_init * rng
        upp = x + state.asy_init * rng
    else:
        osc = (x - state.x_prev1) * (state.x_prev1 - state.x_prev2)
        factor = np.ones(n)
        factor[osc > 0.0] = state.asy_incr
        factor[osc < 0.0] = state.asy_decr
        low = x - factor * (state.x_prev1 - state.low)
        upp = x + factor * (state.upp - state.x_prev1)
        low = np.clip(low, x - _ASY_CLAMP_WIDE * rng, x - _ASY_CLAMP_TIGHT * rng)
        upp = np.clip(upp, x + _ASY_CLAMP_TIGHT * rng, x + _ASY_CLAMP_WIDE * rng)
    state.low, state.upp = low, upp

    alfa = np.maximum.reduce([low + _ALBEFA * (x - low), x - state.move, xmin])
    beta = np.minimum.reduce([upp - _ALBEFA * (upp - x), x + state.move, xmax])

    ux2 = (upp - x) ** 2
    xl2 = (x - low) ** 2
    p0 = np.maximum(df0, 0.0)
    q0 = np.maximum(-df0, 0.0)
    reg0 = 0.001 * (p0 + q0) + _RAA0 / rng
    p0 = (p0 + reg0) * ux2
    q0 = (q0 + reg0) * xl2
    pc = np.maximum(dg, 0.0)
    qc = np.maximum(-dg, 0.0)
    regc = 0.001 * (pc + qc) + _RAA0 / rng[None, :]
    pc = (pc + regc) * ux2[None, :]
    qc = (qc + regc) * xl2[None, :]
    b = pc @ (1.0 / (upp - x)) + qc @ (1.0 / (x - low)) - g

    c = np.full(g.size, state.c_penalty)
    d = np.ones(g.size)
    x_new, y, residual = _solve_subproblem_dual(low, upp, alfa, beta, p0, q0,
                                                pc, qc, b, c, d, state.kkt_tol)
    state.subproblem_feasible = bool(y.max(initial=0.0) <= _FEASIBILITY_SLACK)
    state.last_kkt_residual = residual
    state.x_prev2 = state.x_prev1
    state.x_prev1 = x.copy()
    return x_new


def _primal_minimizers(lam, low, upp, alfa, beta, p0, q0, pc, qc):
    """Closed-form minimizers of the separable Lagrangian for fixed lam."""
    plam = p0 + pc.T @ lam
    qlam = q0 + qc.T @ lam
    sp = np.sqrt(plam)
    sq = np.sqrt(qlam)
    x = np.clip((low * sp + upp * sq) / (sp + sq), alfa, beta)
    return x, plam, qlam


def _dual_value_grad(lam, low, upp, alfa, beta, p0, q0, pc, qc, b, c, d):
    """Dual function value and gradient at multipliers lam >= 0."""
    x, plam, qlam = _primal_minimizers(lam, low, upp, alfa, beta, p0, q0, pc, qc)
    u = upp - x
    l = x - low
    y = np.maximum(0.0, (lam - c) / d)
    w = float(plam @ (1.0 / u) + qlam @ (1.0 / l)) - float(lam @ b) \
        + float(c @ y) + 0.5 * float((d * y) @ y) - float(lam @ y)
    grad = pc @ (1.0 / u) + qc @ (1.0 / l) - b - y
    return w, grad, x, y, plam, qlam


def _solve_subproblem_dual(low, upp, alfa, beta, p0, q0, pc, qc, b, c, d, tol):
    """Maximize the concave dual with a safeguarded projected Newton.

    Returns the primal minimizer, the elastic variables y, and the achieved
    KKT residual (projected dual gradient norm; primal stationarity and the
    box constraints hold exactly by construction).
    """
    m = b.size
    lam = np.zeros(m)
    if m == 0:
        x, _, _ = _primal_minimizers(lam, low, upp, alfa, beta, p0, q0, pc, qc)
        return x, np.zeros(0), 0.0

    w, grad, x, y, plam, qlam = _dual_value_grad(
        lam, low, upp, alfa, beta, p0, q0, pc, qc, b, c, d)
    residual = _projected_residual(lam, grad)
    for _ in range(_DUAL_MAX_ITER):
        if residual <= tol:
            break
        u = upp - x
        l = x - low
        interior = (x > alfa) & (x < beta)
        dgdx = pc[:, interior] / u[interior] ** 2 - qc[:, interior] / l[interior] ** 2
        curv = 2.0 * (plam[interior] / u[interior] ** 3
                      + qlam[interior] / l[interior] ** 3)
        hess = -(dgdx / curv[None, :]) @ dgdx.T
        hess -= np.diag(np.where(lam > c, 1.0 / d, 0.0))

        free = (lam > 0.0) | (grad > 0.0)
        dlam = np.zeros(m)
        if free.any():
            hf = hess[np.ix_(free, free)]
            reg = 1e-12 * max(1.0, float(np.abs(np.diag(hf)).max(initial=0.0)))
            hf = hf - reg * np.eye(int(free.sum()))
            dlam[free] = np.linalg.solve(hf, -grad[free])
        if not np.any(dlam):
            dlam = np.where(free, grad, 0.0)
        step = min(1.0, (1.0 + float(np.abs(lam).max())) /
                   max(float(np.abs(dlam).max()), 1e-300))

        improved = False
        for _ in range(60):
            trial = np.maximum(0.0, lam + step * dlam)
            wt, gt, xt, yt, pt, qt = _dual_value_grad(
                trial, low, upp, alfa, beta, p0, q0, pc, qc, b, c, d)
            if wt > w or np.array_equal(trial, lam):
                improved = wt > w
                break
            step *= 0.5
        if not improved:
            break  # numerical floor of the dual maximization
        lam, w, grad, x, y, plam, qlam = trial, wt, gt, xt, yt, pt, qt
        residual = _projected_residual(lam, grad)
    return x, y, residual


def _projected_residual(lam, grad) -> float:
    """KKT residual of the dual: |grad| on active multipliers, positive
    part elsewhere (a feasibility violation the multiplier should fix)."""
    res = np.where(lam > 0.0, np.abs(grad), np.maximum(grad, 0.0))
    return float(res.max(initial=0.0))
