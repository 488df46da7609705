"""Exact discrete optimal transport with dual potentials and c-transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

DROP_MASS = 1e-14
FEAS_TOL = 1e-8


class InfeasiblePotentialsError(ValueError):
    pass


@dataclass(frozen=True)
class DualPotentials:
    phi: np.ndarray
    psi: np.ndarray


@dataclass(frozen=True)
class OTResult:
    plan: np.ndarray
    value: float
    potentials: DualPotentials | None
    assignment: np.ndarray | None = None


def _check(cost, a, b):
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if cost.ndim != 2 or cost.shape != (a.size, b.size):
        raise ValueError(f"cost shape {cost.shape} does not match marginals ({a.size}, {b.size})")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost must be finite")
    for name, w in (("a", a), ("b", b)):
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} must be a probability vector")
    return cost, a, b


def _uniform_square(a, b):
    n = a.size
    return n == b.size and np.all(np.abs(a - 1.0 / n) <= 1e-12) and np.all(np.abs(b - 1.0 / n) <= 1e-12)


def c_transform(phi, cost) -> np.ndarray:
    """``psi_j = min_i c_ij - phi_i``."""
    cost = np.asarray(cost, dtype=float)
    return np.min(cost - np.asarray(phi, dtype=float)[:, None], axis=0)


def cbar_transform(psi, cost) -> np.ndarray:
    """``phi_i = min_j c_ij - psi_j``."""
    cost = np.asarray(cost, dtype=float)
    return np.min(cost - np.asarray(psi, dtype=float)[None, :], axis=1)


def _assignment_potentials(cost, perm):
    # Difference constraints phi_i - phi_k <= c[i, perm[k]] - c[k, perm[k]],
    # solved by Bellman-Ford from a virtual source; optimality of perm rules
    # out negative cycles.
    n = cost.shape[0]
    w = cost[:, perm] - cost[np.arange(n), perm][None, :]  # w[i, k]
    phi = np.zeros(n)
    for _ in range(n + 1):
        new = np.minimum(phi, np.min(phi[None, :] + w, axis=1))
        if np.array_equal(new, phi):
            break
        phi = new
    psi = c_transform(phi, cost)
    return phi, psi


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Optimal permutation for a square cost table (row i -> column perm[i])."""
    _, cols = linear_sum_assignment(cost)
    return cols


def solve_ot(cost, a, b, potentials: bool = True) -> OTResult:
    """Exact OT between discrete marginals ``a`` and ``b`` for a cost table.

    Uniform marginals of equal size go through the assignment solver; anything
    else is handed to the HiGHS simplex as a transportation LP. Atoms lighter
    than ``1e-14`` are dropped and re-embedded with zero mass.
    """
    cost, a, b = _check(cost, a, b)
    n, m = cost.shape
    if _uniform_square(a, b):
        perm = solve_assignment(cost)
        plan = np.zeros((n, n))
        plan[np.arange(n), perm] = 1.0 / n
        value = float(cost[np.arange(n), perm].sum() / n)
        pot = None
        if potentials:
            phi, psi = _assignment_potentials(cost, perm)
            pot = DualPotentials(phi, psi)
        return OTResult(plan, value, pot, perm)

    keep_r = a >= DROP_MASS
    keep_c = b >= DROP_MASS
    sub = cost[np.ix_(keep_r, keep_c)]
    ar, bc = a[keep_r], b[keep_c]
    ar, bc = ar / ar.sum(), bc / bc.sum()
    p, q = sub.shape
    rows = np.kron(np.eye(p), np.ones((1, q)))
    cols = np.kron(np.ones((1, p)), np.eye(q))
    a_eq = np.vstack([rows, cols])
    b_eq = np.concatenate([ar, bc])
    res = linprog(sub.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    sub_plan = np.maximum(res.x.reshape(p, q), 0.0)
    plan = np.zeros((n, m))
    plan[np.ix_(keep_r, keep_c)] = sub_plan
    value = float(np.sum(sub_plan * sub))
    pot = None
    if potentials:
        duals = res.eqlin.marginals
        phi_s = duals[:p]
        psi_s = c_transform(phi_s, sub)
        phi_s = cbar_transform(psi_s, sub)
        # dropped atoms carry no mass; give them the transform values
        psi = np.empty(m)
        psi[keep_c] = psi_s
        phi = np.empty(n)
        phi[keep_r] = phi_s
        if not keep_c.all():
            psi[~keep_c] = np.min(cost[np.ix_(keep_r, ~keep_c)] - phi_s[:, None], axis=0)
        if not keep_r.all():
            phi[~keep_r] = np.min(cost[~keep_r] - psi[None, :], axis=1)
        pot = DualPotentials(phi, psi)
    return OTResult(plan, value, pot)


def duality_gap(plan, potentials: DualPotentials, cost, a, b, tol: float = FEAS_TOL) -> float:
    """Primal cost minus dual objective; raises if the potentials are infeasible."""
    cost, a, b = _check(cost, a, b)
    slack = cost - potentials.phi[:, None] - potentials.psi[None, :]
    worst = float(slack.min())
    if worst < -tol:
        raise InfeasiblePotentialsError(f"potentials violate phi_i + psi_j <= c_ij by {-worst:.3g}")
    return float(np.sum(np.asarray(plan) * cost) - (a @ potentials.phi + b @ potentials.psi))
