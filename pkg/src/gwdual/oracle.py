"""Direct evaluation of the quadratic GW functional and exhaustive permutation search.

Nothing here goes through the dual representation; these routines are the
ground truth the dual solver is checked against.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, squared_distances
from .sinkhorn import kl_divergence

MAX_BRUTE_FORCE_N = 9
ARGMIN_TOL = 1e-9


@dataclass(frozen=True)
class PermutationAssignment:
    sigma: tuple[int, ...]
    value: float

    def __post_init__(self):
        if sorted(self.sigma) != list(range(len(self.sigma))):
            raise ValueError(f"{self.sigma} is not a permutation")

    def plan(self) -> np.ndarray:
        return permutation_plan(self.sigma)


@dataclass(frozen=True)
class BruteForceResult:
    value: float
    argmin: list[PermutationAssignment]
    tolerance: float
    evaluated: int


def permutation_plan(sigma) -> np.ndarray:
    n = len(sigma)
    plan = np.zeros((n, n))
    plan[np.arange(n), np.asarray(sigma)] = 1.0 / n
    return plan


def _check_plan(mu, nu, plan, tol=1e-9):
    plan = np.asarray(plan, dtype=float)
    if plan.shape != (mu.n, nu.n):
        raise ValueError(f"plan shape {plan.shape} does not match ({mu.n}, {nu.n})")
    if np.any(plan < -tol):
        raise ValueError("plan has negative entries")
    if np.max(np.abs(plan.sum(1) - mu.weights)) > tol or np.max(np.abs(plan.sum(0) - nu.weights)) > tol:
        raise ValueError("plan marginals do not match the measures")
    return plan


def quad_objective(mu: DiscreteMeasure, nu: DiscreteMeasure, plan) -> float:
    """``sum_{i,j,k,l} P_ij P_kl (|x_i - x_k|^2 - |y_j - y_l|^2)^2``."""
    plan = _check_plan(mu, nu, plan)
    dx = squared_distances(mu.points, mu.points)
    dy = squared_distances(nu.points, nu.points)
    total = 0.0
    for i in range(mu.n):
        row = plan[i]
        js = np.nonzero(row)[0]
        for j in js:
            # (k, l) block for this (i, j)
            distortion = (dx[i][:, None] - dy[j][None, :]) ** 2
            total += row[j] * float(np.sum(plan * distortion))
    return max(total, 0.0)


def egw_objective(mu: DiscreteMeasure, nu: DiscreteMeasure, plan, epsilon: float) -> float:
    q = quad_objective(mu, nu, plan)
    if epsilon == 0:
        return q
    return q + epsilon * kl_divergence(plan, mu.weights, nu.weights)


def _perm_values(dx, dy, perms):
    sub = dy[perms[:, :, None], perms[:, None, :]]
    return np.sum((dx[None] - sub) ** 2, axis=(1, 2))


def _branch(first, n, dx, dy, chunk=40320):
    rest = [k for k in range(n) if k != first]
    perms_iter = itertools.permutations(rest)
    out_p, out_v = [], []
    while True:
        block = list(itertools.islice(perms_iter, chunk))
        if not block:
            break
        perms = np.empty((len(block), n), dtype=np.intp)
        perms[:, 0] = first
        perms[:, 1:] = block
        out_p.append(perms)
        out_v.append(_perm_values(dx, dy, perms))
    return np.concatenate(out_p), np.concatenate(out_v)


def brute_force_gw_uniform(
    mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = ARGMIN_TOL, workers: int = 1
) -> BruteForceResult:
    """Exact GW^2 between uniform n-point measures by enumerating all n! permutations.

    The enumeration is split by the image of the first atom, so the branches can
    run on separate threads; they are merged in lexicographic order.
    """
    n = mu.n
    if nu.n != n:
        raise ValueError("brute force needs measures with the same number of atoms")
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"n={n} exceeds the brute-force limit of {MAX_BRUTE_FORCE_N}")
    if not (mu.is_uniform() and nu.is_uniform()):
        raise ValueError("brute force needs uniform weights")
    dx = squared_distances(mu.points, mu.points)
    dy = squared_distances(nu.points, nu.points)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda f: _branch(f, n, dx, dy), range(n)))
    else:
        parts = [_branch(f, n, dx, dy) for f in range(n)]
    perms = np.concatenate([p for p, _ in parts])
    vals = np.concatenate([v for _, v in parts]) / n**2
    best = float(vals.min())
    hits = np.nonzero(vals <= best + tol)[0]
    argmin = [PermutationAssignment(tuple(int(k) for k in perms[h]), float(vals[h])) for h in hits]
    return BruteForceResult(max(best, 0.0), argmin, tol, math.factorial(n))


def identity_like(sigma) -> str | None:
    n = len(sigma)
    if tuple(sigma) == tuple(range(n)):
        return "id"
    if tuple(sigma) == tuple(range(n - 1, -1, -1)):
        return "anti-id"
    return None
