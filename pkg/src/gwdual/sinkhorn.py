"""Log-domain Sinkhorn for entropic optimal transport between discrete marginals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ot_exact import DualPotentials, _check

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000


class SinkhornConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class EotSolution:
    potentials: DualPotentials
    plan: np.ndarray
    value: float
    epsilon: float
    iterations: int
    residual: float
    schrodinger: tuple[float, float]
    converged: bool
    trace: list[float] = field(default_factory=list)

    @property
    def primal_value(self) -> float:
        return float(np.sum(self.plan * self._cost)) + self.epsilon * self._kl

    # filled by solve_eot; kept private so the dataclass repr stays small
    _cost: np.ndarray = field(default=None, repr=False)
    _kl: float = field(default=0.0, repr=False)


def _softmin(h: np.ndarray, logw: np.ndarray, eps: float, axis: int) -> np.ndarray:
    """``-eps * log sum_k w_k exp(-h_k / eps)`` along ``axis``."""
    z = logw - h / eps
    zmax = z.max(axis=axis, keepdims=True)
    out = zmax + np.log(np.exp(z - zmax).sum(axis=axis, keepdims=True))
    return -eps * np.squeeze(out, axis=axis)


def eot_dual_objective(phi, psi, cost, a, b, eps) -> float:
    """``<a, phi> + <b, psi> - eps * sum a_i b_j exp((phi_i + psi_j - c_ij)/eps) + eps``."""
    k = np.exp((phi[:, None] + psi[None, :] - cost) / eps)
    return float(a @ phi + b @ psi - eps * (a @ k @ b) + eps)


def schrodinger_residual(potentials: DualPotentials, cost, a, b, eps) -> tuple[float, float]:
    cost, a, b = _check(cost, a, b)
    k = np.exp((potentials.phi[:, None] + potentials.psi[None, :] - cost) / eps)
    row = float(np.max(np.abs(a @ k - 1.0)))
    col = float(np.max(np.abs(k @ b - 1.0)))
    return row, col


def kl_divergence(plan, a, b) -> float:
    """``KL(plan || a (x) b)`` with ``0 log 0 = 0``; ``inf`` if mass sits where ``a_i b_j = 0``."""
    plan = np.asarray(plan, dtype=float)
    ref = np.outer(a, b)
    pos = plan > 0
    if np.any(pos & (ref <= 0)):
        return float("inf")
    val = float(np.sum(plan[pos] * np.log(plan[pos] / ref[pos])))
    return max(val, 0.0)


def _dual_value(phi, psi, cost, loga, logb, a, b, eps):
    z = (phi[:, None] + psi[None, :] - cost) / eps + loga[:, None] + logb[None, :]
    return float(a @ phi + b @ psi - eps * np.exp(z).sum() + eps), np.exp(z)


def _newton_step(phi, psi, cost, a, b, loga, logb, eps):
    """One damped Newton ascent step on the dual, gauge fixed by pinning ``psi[-1]``.

    A step is accepted on sufficient ascent, or, once the dual value is flat to
    rounding, on a smaller gradient.
    """
    val, plan = _dual_value(phi, psi, cost, loga, logb, a, b, eps)
    n, m = plan.shape
    r, s = plan.sum(1), plan.sum(0)
    full_grad = np.concatenate([a - r, b - s])
    grad = full_grad[:-1]
    hess = np.zeros((n + m, n + m))
    hess[:n, :n] = np.diag(r)
    hess[n:, n:] = np.diag(s)
    hess[:n, n:] = plan
    hess[n:, :n] = plan.T
    hess = hess[:-1, :-1] / eps
    hess[np.diag_indices_from(hess)] += 1e-12 * np.max(np.diag(hess))
    try:
        step = np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return phi, psi, False
    if not np.all(np.isfinite(step)):
        return phi, psi, False
    step = np.append(step, 0.0)
    slope = float(grad @ step[:-1])
    gnorm = float(np.max(np.abs(full_grad)))
    flat = 1e-13 * (1.0 + abs(val))
    t = 1.0
    while t > 1e-10:
        nphi, npsi = phi + t * step[:n], psi + t * step[n:]
        with np.errstate(over="ignore"):
            nval, nplan = _dual_value(nphi, npsi, cost, loga, logb, a, b, eps)
        if np.isfinite(nval):
            if nval >= val + 1e-4 * t * slope:
                return nphi, npsi, True
            ngrad = max(np.max(np.abs(a - nplan.sum(1))), np.max(np.abs(b - nplan.sum(0))))
            if nval >= val - flat and ngrad < gnorm:
                return nphi, npsi, True
        t *= 0.5
    return phi, psi, False


NEWTON_AFTER = 200
NEWTON_MAX_SIZE = 1500
WARM_BUDGET = 300


KERNEL_BLOCK = 50
_SCALE_LIMIT = 1e100


def _kernel_block(cost, a, b, eps, phi, psi, sweeps, tol):
    """Up to ``sweeps`` Sinkhorn sweeps with the kernel taken relative to ``(phi, psi)``.

    Returns ``None`` if the scalings leave a safe range; the caller then falls
    back to log-domain sweeps.
    """
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        k = np.exp((phi[:, None] + psi[None, :] - cost) / eps)
        v = np.ones(b.size)
        res = np.inf
        done = 0
        for _ in range(sweeps):
            u = 1.0 / (k @ (b * v))
            s = v * ((a * u) @ k)
            done += 1
            res = float(np.max(np.abs(s - 1.0)))
            bad = not (np.all(np.isfinite(u)) and np.all(np.isfinite(s)))
            if bad or u.max() > _SCALE_LIMIT or u.min() < 1 / _SCALE_LIMIT:
                return None
            if res <= tol:
                break
            v = v / s
            if v.max() > _SCALE_LIMIT or v.min() < 1 / _SCALE_LIMIT:
                return None
    return phi + eps * np.log(u), psi + eps * np.log(v), done, res


def _run(cost, a, b, eps, phi, psi, tol, max_iter, trace):
    loga, logb = np.log(a), np.log(b)
    logs = [] if trace else None
    use_newton = cost.shape[0] + cost.shape[1] <= NEWTON_MAX_SIZE
    psi = _softmin(cost - phi[:, None], loga[:, None], eps, axis=0)
    it = 0
    failures = 0
    res = np.inf
    while it < max_iter:
        newton_now = use_newton and it >= NEWTON_AFTER
        if newton_now:
            phi, psi, ok = _newton_step(phi, psi, cost, a, b, loga, logb, eps)
            if not ok:
                failures += 1
                use_newton = failures < 5
            psi = _softmin(cost - phi[:, None], loga[:, None], eps, axis=0)
        sweeps = 1 if newton_now or trace else min(KERNEL_BLOCK, max_iter - it)
        if use_newton and not newton_now:
            sweeps = min(sweeps, NEWTON_AFTER - it)
        block = _kernel_block(cost, a, b, eps, phi, psi, sweeps, tol)
        if block is not None:
            phi, psi, done, res = block
            it += done
            if logs is not None:
                logs.append(float(a @ phi + b @ psi))
            if res <= tol:
                break
            continue
        phi = _softmin(cost - psi[None, :], logb[None, :], eps, axis=1)
        it += 1
        psi_next = _softmin(cost - phi[:, None], loga[:, None], eps, axis=0)
        # sum_i a_i exp((phi_i + psi_j - c_ij)/eps) = exp((psi_j - psi_next_j)/eps)
        res = float(np.max(np.abs(np.expm1((psi - psi_next) / eps))))
        if logs is not None:
            logs.append(float(a @ phi + b @ psi))
        if res <= tol:
            break
        psi = psi_next
    return phi, psi, it, res, logs


def epsilon_schedule(epsilon: float, spread: float, factor: float = 4.0) -> list[float]:
    """Intermediate regularizations for a cold start, largest first (target excluded)."""
    if epsilon >= 1e-2 * spread:
        return []
    stages = []
    e = spread
    while e > factor * epsilon:
        stages.append(e)
        e /= factor
    return stages


def solve_eot(
    cost,
    a,
    b,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: DualPotentials | None = None,
    trace: bool = False,
    warn: bool = True,
) -> EotSolution:
    """Entropic OT ``min <c, P> + eps KL(P || a (x) b)`` by log-domain Sinkhorn.

    Iterates until both Schrodinger residuals are below ``tol``. Past 200 sweeps
    on small problems, each sweep is preceded by a damped Newton step on the
    dual (line search keeps the ascent monotone). A warm start ``init`` gets
    300 sweeps; if it has not converged by then the solve restarts from zero.
    Cold solves with ``epsilon`` below 1% of the cost range are preceded by
    stages that shrink the regularization by 4x from the cost range down.
    Potentials are returned with ``phi`` centered under ``a``.
    """
    cost, a, b = _check(cost, a, b)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("marginals must be strictly positive")
    spread = float(cost.max() - cost.min())
    total_it = 0
    res = np.inf
    if init is not None:
        # a warm start from a different cost can be far off; cap its budget
        phi, psi, it, res, logs = _run(
            cost, a, b, epsilon, np.array(init.phi, dtype=float), np.array(init.psi, dtype=float),
            tol, min(max_iter, WARM_BUDGET), trace,
        )
        total_it += it
    if res > tol:
        phi, psi = np.zeros(a.size), np.zeros(b.size)
        for e in epsilon_schedule(epsilon, spread):
            phi, psi, it, _, _ = _run(cost, a, b, e, phi, psi, max(tol, 1e-6), max_iter, False)
            total_it += it
        phi, psi, it, res, logs = _run(cost, a, b, epsilon, phi, psi, tol, max(max_iter - total_it, 1), trace)
        total_it += it
    converged = res <= tol

    shift = float(a @ phi)
    phi = phi - shift
    psi = psi + shift
    pot = DualPotentials(phi, psi)
    plan = np.outer(a, b) * np.exp((phi[:, None] + psi[None, :] - cost) / epsilon)
    row, col = schrodinger_residual(pot, cost, a, b, epsilon)
    marg = float(max(np.max(np.abs(plan.sum(1) - a)), np.max(np.abs(plan.sum(0) - b))))
    value = eot_dual_objective(phi, psi, cost, a, b, epsilon)
    if not converged and warn:
        warnings.warn(
            f"Sinkhorn did not reach tol={tol:g} in {max_iter} iterations (residual {res:.3g})",
            SinkhornConvergenceWarning,
            stacklevel=2,
        )
    sol = EotSolution(pot, plan, value, float(epsilon), total_it, marg, (row, col), converged, logs or [])
    sol._cost = cost
    sol._kl = kl_divergence(plan, a, b)
    return sol
