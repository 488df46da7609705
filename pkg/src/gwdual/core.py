"""Quadratic GW and entropic GW through the auxiliary-matrix representation.

For centered measures the (entropic) GW cost splits as ``S1 + S2_eps`` where
``S1`` only involves the marginals and

    S2_eps = min_A 32 ||A||_F^2 + OT_eps(c_A),
    c_A(x, y) = -4 |x|^2 |y|^2 - 32 x^T A y,

with an optimal ``A`` inside the box ``[-M/2, M/2]^{dx x dy}``,
``M = sqrt(M2(mu) M2(nu))``. The outer problem is nonconvex; it is attacked by
alternating ``A <- 1/2 int x y^T dpi`` with an exact inner solve, from many
starts (random, orthogonal-alignment seeds, and a dense grid when ``A`` has
at most two entries). For ``eps > 0``
the outer objective is smooth and a box-constrained quasi-Newton method on
the same objective replaces the (slowly converging) alternation.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import ortho_group

from .measures import (
    DiscreteMeasure,
    Translation,
    center,
    is_centered,
    make_rng,
    moment,
    pairwise_fourth_energy,
)
from .ot_exact import DualPotentials, solve_ot
from .sinkhorn import DEFAULT_TOL, solve_eot

log = logging.getLogger(__name__)

DEFAULT_STARTS = 32
MAX_OUTER = 500
GRID_1D = 2048
GRID_2D = 129
ALIGN_CANDIDATES = 256
ALIGN_KEEP = 8
ALIGN_MAX_PAIRS = 4096


class NotCenteredError(ValueError):
    pass


@dataclass(frozen=True)
class DualMatrix:
    a: np.ndarray
    half_width: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        if np.any(np.abs(a) > self.half_width * (1 + 1e-12) + 1e-15):
            raise ValueError("entries of A lie outside [-halfWidth, halfWidth]")
        object.__setattr__(self, "a", a)


@dataclass
class InnerSolve:
    value: float
    plan: np.ndarray
    potentials: DualPotentials | None = None
    converged: bool = True


@dataclass
class S2Result:
    value: float
    a_star: DualMatrix
    plan: np.ndarray
    converged: bool
    multistart_log: list[tuple[str, float]]
    outer_iterations: int
    fixed_point_residual: float


@dataclass
class GwSolution:
    total_value: float
    s1: float
    s2: float
    a_star: DualMatrix
    coupling: np.ndarray
    epsilon: float
    multistart_log: list[tuple[str, float]]
    translations: tuple[Translation, Translation]
    converged: bool = True
    outer_iterations: int = 0
    fixed_point_residual: float = 0.0
    settings: dict = field(default_factory=dict)

    @property
    def distance(self) -> float:
        return float(np.sqrt(max(self.total_value, 0.0)))


def _require_centered(*measures):
    for m in measures:
        if not is_centered(m):
            raise NotCenteredError(f"measure is not centered (|mean| = {np.linalg.norm(m.mean):.3g})")


def s1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Marginal-only part of the expanded GW cost (centered inputs)."""
    _require_centered(mu, nu)
    return pairwise_fourth_energy(mu) + pairwise_fourth_energy(nu) - 4.0 * moment(mu, 2) * moment(nu, 2)


def half_width(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return 0.5 * float(np.sqrt(moment(mu, 2) * moment(nu, 2)))


def cost_table_cA(mu: DiscreteMeasure, nu: DiscreteMeasure, a) -> np.ndarray:
    a = np.atleast_2d(np.asarray(getattr(a, "a", a), dtype=float))
    if a.shape != (mu.dim, nu.dim):
        raise ValueError(f"A has shape {a.shape}, expected ({mu.dim}, {nu.dim})")
    x, y = mu.points, nu.points
    sx = np.sum(x * x, axis=1)
    sy = np.sum(y * y, axis=1)
    return -4.0 * np.outer(sx, sy) - 32.0 * (x @ a @ y.T)


def cross_moment(mu: DiscreteMeasure, nu: DiscreteMeasure, plan) -> np.ndarray:
    """``int x y^T dpi`` as a ``(dx, dy)`` matrix."""
    return mu.points.T @ np.asarray(plan) @ nu.points


def inner_solve(mu, nu, a, epsilon: float, init=None, tol: float = DEFAULT_TOL) -> InnerSolve:
    cost = cost_table_cA(mu, nu, a)
    if epsilon == 0:
        r = solve_ot(cost, mu.weights, nu.weights, potentials=False)
        return InnerSolve(r.value, r.plan)
    sol = solve_eot(cost, mu.weights, nu.weights, epsilon, tol=tol, init=init, warn=False)
    return InnerSolve(sol.value, sol.plan, sol.potentials, sol.converged)


def dual_objective(mu, nu, a, epsilon: float = 0.0, tol: float = DEFAULT_TOL) -> float:
    """``32 ||A||_F^2 + OT_eps(c_A)``; an upper bound on ``S2_eps`` for every ``A``."""
    _require_centered(mu, nu)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    a = np.atleast_2d(np.asarray(getattr(a, "a", a), dtype=float))
    return 32.0 * float(np.sum(a * a)) + inner_solve(mu, nu, a, epsilon, tol=tol).value


@dataclass
class _Run:
    value: float
    a: np.ndarray
    plan: np.ndarray
    iterations: int
    converged: bool
    potentials: DualPotentials | None = None


def _alternate(mu, nu, a0, epsilon, tol, init=None, max_outer=MAX_OUTER) -> _Run:
    """Alternating minimization of ``F(A) = 32||A||^2 + OT_eps(c_A)`` from ``a0``.

    Each round solves the inner problem at the current ``A`` and moves to
    ``A = 1/2 int x y^T dpi``, which cannot increase ``F``. For ``eps = 0`` a
    2-cycle between tied vertex plans is broken once by averaging the two plans.
    """
    a = np.array(a0, dtype=float)
    inner = inner_solve(mu, nu, a, epsilon, init=init, tol=tol)
    f = 32.0 * float(np.sum(a * a)) + inner.value
    plans = [inner.plan]
    averaged = False
    for it in range(1, max_outer + 1):
        plan = inner.plan
        if (
            epsilon == 0
            and not averaged
            and len(plans) >= 3
            and np.array_equal(plans[-1], plans[-3])
            and not np.array_equal(plans[-1], plans[-2])
        ):
            plan = 0.5 * (plans[-1] + plans[-2])
            averaged = True
        a_new = 0.5 * cross_moment(mu, nu, plan)
        inner_new = inner_solve(mu, nu, a_new, epsilon, init=inner.potentials, tol=tol)
        f_new = 32.0 * float(np.sum(a_new * a_new)) + inner_new.value
        plans.append(inner_new.plan)
        done = abs(f_new - f) <= 1e-10 * (1.0 + abs(f)) or float(np.linalg.norm(a_new - a)) <= 1e-9
        if done:
            out_plan = inner_new.plan
            if epsilon == 0:
                # a tied predecessor plan that generated a_new is an equally
                # good inner optimum and satisfies the fixed point exactly
                cost = cost_table_cA(mu, nu, a_new)
                if abs(float(np.sum(cost * plan)) - inner_new.value) <= 1e-12 * (1.0 + abs(f_new)):
                    out_plan = plan
            return _Run(f_new, a_new, out_plan, it, True, inner_new.potentials)
        a, f, inner = a_new, f_new, inner_new
    return _Run(f, a, inner.plan, max_outer, False, inner.potentials)


def _quasi_newton(mu, nu, a0, epsilon, tol, hw, max_outer=MAX_OUTER) -> _Run:
    """L-BFGS-B on ``F`` over the box, using ``grad F = 64 (A - 1/2 int x y^T dpi_A)``.

    Only meaningful for ``eps > 0`` where ``F`` is smooth. The result is
    polished by alternation so the reported point satisfies the same stopping
    rule as the alternating strategy.
    """
    shape = a0.shape
    state = {"pot": None, "best": None}

    def fun(flat):
        a = flat.reshape(shape)
        inner = inner_solve(mu, nu, a, epsilon, init=state["pot"], tol=tol)
        state["pot"] = inner.potentials
        f = 32.0 * float(np.sum(a * a)) + inner.value
        grad = 64.0 * (a - 0.5 * cross_moment(mu, nu, inner.plan))
        if state["best"] is None or f < state["best"][0]:
            state["best"] = (f, a.copy(), inner)
        return f, grad.ravel()

    res = minimize(
        fun,
        np.asarray(a0, dtype=float).ravel(),
        jac=True,
        method="L-BFGS-B",
        bounds=[(-hw, hw)] * a0.size,
        options={"maxiter": max_outer, "gtol": 1e-9, "ftol": 1e-15, "maxcor": 20},
    )
    _, a_best, inner = state["best"]
    polished = _alternate(mu, nu, a_best, epsilon, tol, init=inner.potentials, max_outer=max_outer)
    polished.iterations += int(res.nit)
    return polished


def _grid_starts(hw, shape, points):
    axes = np.linspace(-hw, hw, points)
    if shape[0] * shape[1] == 1:
        return [np.array([[v]]) for v in axes]
    mesh = np.stack(np.meshgrid(axes, axes, indexing="ij"), axis=-1).reshape(-1, 2)
    return [m.reshape(shape) for m in mesh]


def _align_starts(mu, nu, count, seed):
    # Every local minimizer at eps = 0 is A = 1/2 int x y^T dpi for some
    # coupling; couplings that align x with an orthogonal image of y make
    # good seeds. Rank them by the exact outer objective.
    dx, dy = mu.dim, nu.dim
    d = max(dx, dy)
    if d == 1:
        frames = [np.ones((1, 1)), -np.ones((1, 1))]
    else:
        frames = [ortho_group.rvs(d, random_state=make_rng(seed, 100_000 + k))[:dx, :dy] for k in range(count)]
    scored = []
    for q in frames:
        plan = solve_ot(-(mu.points @ q @ nu.points.T), mu.weights, nu.weights, potentials=False).plan
        a0 = 0.5 * cross_moment(mu, nu, plan)
        inner = inner_solve(mu, nu, a0, 0.0)
        scored.append((32.0 * float(np.sum(a0 * a0)) + inner.value, a0))
    scored.sort(key=lambda t: t[0])
    return [a0 for _, a0 in scored]


def solve_s2(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    epsilon: float = 0.0,
    n_starts: int = DEFAULT_STARTS,
    seed: int = 0,
    grid: int | None | bool = True,
    tol: float = DEFAULT_TOL,
    extra_starts=(),
    strategy: str | None = None,
    workers: int = 1,
    align: int | None | bool = True,
) -> S2Result:
    """Minimize ``32||A||^2 + OT_eps(c_A)`` over the box ``D_M``.

    ``grid=True`` picks the default grid (2048 points for one entry, 129 per axis
    for two, none beyond); an int overrides the per-axis count and ``None`` or
    ``False`` disables it. The grid minimizer is polished by alternation like
    every other start. Ties between starts go to the lowest start index.

    ``align=True`` adds the best few of ``256`` alignment seeds: couplings
    maximizing ``int <x, Q y>`` for random orthogonal ``Q`` (the two signs in
    1D), mapped to ``A = 1/2 int x y^T dpi``. It is on by default for problems
    with at most ``4096`` atom pairs and in 1D; an int sets the number of
    candidates and ``False`` disables it.

    ``strategy`` is ``"alternate"`` (default for ``eps = 0``) or ``"lbfgs"``
    (default for ``eps > 0``, where ``F`` is differentiable). Starts run on
    ``workers`` threads; the merge is by start index, so results do not
    depend on scheduling.
    """
    _require_centered(mu, nu)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if strategy is None:
        strategy = "alternate" if epsilon == 0 else "lbfgs"
    if strategy not in ("alternate", "lbfgs"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "lbfgs" and epsilon == 0:
        raise ValueError("the quasi-Newton strategy needs epsilon > 0")
    shape = (mu.dim, nu.dim)
    hw = half_width(mu, nu)
    if hw == 0.0:
        inner = inner_solve(mu, nu, np.zeros(shape), epsilon, tol=tol)
        return S2Result(inner.value, DualMatrix(np.zeros(shape), 0.0), inner.plan, inner.converged, [("zero", inner.value)], 0, 0.0)

    starts: list[tuple[str, np.ndarray]] = [("zero", np.zeros(shape))]
    for k, a0 in enumerate(extra_starts):
        starts.append((f"given{k}", np.asarray(a0, dtype=float).reshape(shape)))
    for k in range(n_starts):
        rng = make_rng(seed, k)
        starts.append((f"random{k}", rng.uniform(-hw, hw, size=shape)))

    if align is True:
        align = ALIGN_CANDIDATES if (mu.weights.size * nu.weights.size <= ALIGN_MAX_PAIRS or max(shape) == 1) else None
    if align:
        for k, a0 in enumerate(_align_starts(mu, nu, int(align), seed)[:ALIGN_KEEP]):
            starts.append((f"align{k}", a0))

    entries = shape[0] * shape[1]
    if grid is True:
        grid = GRID_1D if entries == 1 else GRID_2D if entries == 2 else None
    if grid and entries <= 2:
        best_val, best_a, init = np.inf, None, None
        for a in _grid_starts(hw, shape, int(grid)):
            inner = inner_solve(mu, nu, a, epsilon, init=init, tol=tol)
            init = inner.potentials
            val = 32.0 * float(np.sum(a * a)) + inner.value
            if val < best_val:
                best_val, best_a = val, a
        starts.insert(1, ("grid", best_a))

    def descend(a0):
        if strategy == "alternate":
            return _alternate(mu, nu, a0, epsilon, tol)
        return _quasi_newton(mu, nu, a0, epsilon, tol, hw)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(descend, [a0 for _, a0 in starts]))
    else:
        runs = [descend(a0) for _, a0 in starts]
    best: _Run | None = None
    history = []
    for (label, _), run in zip(starts, runs):
        history.append((label, run.value))
        if best is None or run.value < best.value:
            best = run

    if not best.converged:
        log.warning("outer loop hit its iteration cap; reporting the best point found")
    a_star = np.clip(best.a, -hw, hw)
    resid = float(np.linalg.norm(a_star - 0.5 * cross_moment(mu, nu, best.plan)))
    return S2Result(
        value=float(best.value),
        a_star=DualMatrix(a_star, hw),
        plan=best.plan,
        converged=best.converged,
        multistart_log=history,
        outer_iterations=best.iterations,
        fixed_point_residual=resid,
    )


def _solve(mu, nu, epsilon, **opts) -> GwSolution:
    mu_c, t_mu = center(mu)
    nu_c, t_nu = center(nu)
    first = s1(mu_c, nu_c)
    res = solve_s2(mu_c, nu_c, epsilon, **opts)
    return GwSolution(
        total_value=first + res.value,
        s1=first,
        s2=res.value,
        a_star=res.a_star,
        coupling=res.plan,
        epsilon=float(epsilon),
        multistart_log=res.multistart_log,
        translations=(t_mu, t_nu),
        converged=res.converged,
        outer_iterations=res.outer_iterations,
        fixed_point_residual=res.fixed_point_residual,
        settings={"epsilon": float(epsilon), **{k: v for k, v in opts.items() if k != "extra_starts"}},
    )


def gw(mu: DiscreteMeasure, nu: DiscreteMeasure, **opts) -> GwSolution:
    """Squared (2,2)-GW distance; centering is applied internally and recorded."""
    return _solve(mu, nu, 0.0, **opts)


def egw(mu: DiscreteMeasure, nu: DiscreteMeasure, epsilon: float, **opts) -> GwSolution:
    """Entropic GW cost ``S_eps``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive; use gw() for epsilon = 0")
    return _solve(mu, nu, epsilon, **opts)
