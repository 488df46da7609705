"""One-dimensional case study.

On the line the outer variable is a scalar ``a`` restricted to
``[W-/2, W+/2]``, where ``W-`` and ``W+`` are the extreme values of
``int x y dpi``. Writing ``f(a) = 32 a^2`` and
``g(a) = min_pi int (-4 x^2 y^2 - 32 a x y) dpi`` (concave, piecewise linear),
the coupling-dependent part of GW is ``min_a f + g``. For uniform measures on
distinct points an optimum only at the endpoints corresponds to the identity
and anti-identity permutations being the only optimal ones.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import _require_centered
from .measures import DiscreteMeasure, moment
from .oracle import BruteForceResult, identity_like
from .ot_exact import solve_ot

DEFAULT_GRID = 4097

BOUNDARY = "BOUNDARY"
INTERIOR = "INTERIOR"


class BoundaryMismatch(RuntimeError):
    """The profile and the permutation oracle disagree about boundary optimality."""


XI_VARIANTS = ("figure", "formula")


def make_xi_datasets(n: int, xi: float, variant: str = "figure") -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """The two uniform point sets ``x^xi``, ``y^xi`` on ``n`` points.

    ``y`` is ``-1``, ``-1 + xi``, then ``(i - 2) xi`` for ``i = 3..n``. ``x`` is
    ``-1``, then an arithmetic run with step ``xi`` for ``i = 2..n-1``, then ``1``.
    The run is ``(2i - n - 2) xi / 2`` for ``variant="figure"`` and the symmetric
    ``(2i - n - 1) xi / 2`` for ``variant="formula"``. Only the first reproduces
    the boundary optimum at ``xi = 0.03`` for ``n = 7``; with the symmetric run
    the identity stops being optimal below ``xi ~ 0.0314``.

    Requires ``n > 6``, ``0 < xi < 2 / (n - 3)`` and strictly increasing points.
    """
    if int(n) != n or n <= 6:
        raise ValueError(f"n must be an integer larger than 6, got {n}")
    if variant not in XI_VARIANTS:
        raise ValueError(f"variant must be one of {XI_VARIANTS}, got {variant!r}")
    n = int(n)
    bound = 2.0 / (n - 3)
    if not 0 < xi < bound:
        raise ValueError(f"xi must lie in (0, {bound:g}) for n={n}, got {xi}")
    i = np.arange(1, n + 1, dtype=float)
    shift = n + 2 if variant == "figure" else n + 1
    x = (2 * i - shift) * xi / 2
    x[0], x[-1] = -1.0, 1.0
    y = (i - 2) * xi
    y[0], y[1] = -1.0, -1.0 + xi
    if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
        raise ValueError(f"xi={xi} does not give strictly increasing points for n={n}")
    return DiscreteMeasure(x), DiscreteMeasure(y)


def _monotone_plan(xw, yw) -> np.ndarray:
    """North-west corner rule on two weight vectors (already in pairing order)."""
    plan = np.zeros((xw.size, yw.size))
    i = j = 0
    ra, rb = float(xw[0]), float(yw[0])
    while i < xw.size and j < yw.size:
        m = min(ra, rb)
        plan[i, j] += m
        ra -= m
        rb -= m
        if ra <= 1e-15 and i < xw.size:
            i += 1
            ra = float(xw[i]) if i < xw.size else 0.0
        if rb <= 1e-15 and j < yw.size:
            j += 1
            rb = float(yw[j]) if j < yw.size else 0.0
    return plan


def _sorted_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure, reverse: bool) -> np.ndarray:
    ix = np.argsort(mu.points[:, 0], kind="stable")
    iy = np.argsort(nu.points[:, 0], kind="stable")
    if reverse:
        iy = iy[::-1]
    p = _monotone_plan(mu.weights[ix], nu.weights[iy])
    plan = np.zeros((mu.n, nu.n))
    plan[np.ix_(ix, iy)] = p
    return plan


def _check_1d(*measures):
    for m in measures:
        if m.dim != 1:
            raise ValueError(f"expected a one-dimensional measure, got dimension {m.dim}")


def w_bounds(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[float, float]:
    """``(W-, W+)``: ``int x y dpi`` under the antitone and comonotone couplings.

    ``W+`` is cross-checked against ``(M2(mu) + M2(nu) - W2^2) / 2`` with ``W2``
    from an exact transport solve.
    """
    _check_1d(mu, nu)
    x, y = mu.points[:, 0], nu.points[:, 0]
    w_plus = float(x @ _sorted_coupling(mu, nu, False) @ y)
    w_minus = float(x @ _sorted_coupling(mu, nu, True) @ y)
    w2sq = solve_ot((x[:, None] - y[None, :]) ** 2, mu.weights, nu.weights, potentials=False).value
    check = 0.5 * (moment(mu, 2) + moment(nu, 2) - w2sq)
    if abs(check - w_plus) > 1e-9 * (1.0 + abs(w_plus)):
        raise RuntimeError(f"comonotone value {w_plus!r} disagrees with the W2 identity {check!r}")
    return w_minus, w_plus


@dataclass
class FGProfile:
    a_grid: np.ndarray
    f: np.ndarray
    g: np.ndarray
    interval: tuple[float, float]
    # 1/2 int x y dpi_a for the inner plan found at each grid point
    linear_part: np.ndarray

    @property
    def f_plus_g(self) -> np.ndarray:
        return self.f + self.g

    def minimizers(self, tol: float = 1e-9) -> np.ndarray:
        h = self.f_plus_g
        lo = float(h.min())
        return np.flatnonzero(h <= lo + tol * (1.0 + abs(lo)))

    @property
    def a_star(self) -> float:
        return float(self.a_grid[int(np.argmin(self.f_plus_g))])


def profile_fg(mu: DiscreteMeasure, nu: DiscreteMeasure, grid_size: int = DEFAULT_GRID, workers: int = 1) -> FGProfile:
    """Evaluate ``f`` and ``g`` on an equispaced grid over ``[W-/2, W+/2]``.

    Endpoints are always grid members. Each ``g(a)`` is an exact transport
    solve with cost ``-4 x^2 y^2 - 32 a x y``.
    """
    _check_1d(mu, nu)
    _require_centered(mu, nu)
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    w_minus, w_plus = w_bounds(mu, nu)
    lo, hi = 0.5 * w_minus, 0.5 * w_plus
    grid = np.linspace(lo, hi, grid_size)
    x, y = mu.points[:, 0], nu.points[:, 0]
    quad = -4.0 * np.outer(x * x, y * y)
    xy = np.outer(x, y)

    def solve(a):
        r = solve_ot(quad - 32.0 * a * xy, mu.weights, nu.weights, potentials=False)
        return r.value, 0.5 * float(np.sum(r.plan * xy))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(solve, grid))
    else:
        out = [solve(a) for a in grid]
    g = np.array([v for v, _ in out])
    lin = np.array([b for _, b in out])
    return FGProfile(grid, 32.0 * grid**2, g, (lo, hi), lin)


@dataclass
class Classification:
    kind: str
    minimizer_indices: np.ndarray
    a_star: float
    argmin_kinds: list
    consistent: bool


def classify_optimum(profile: FGProfile, oracle: BruteForceResult, tol: float = 1e-9) -> Classification:
    """Compare where ``f + g`` is minimized with the optimal permutations.

    The profile is BOUNDARY when every grid minimizer lies within one cell of
    an endpoint. Raises :class:`BoundaryMismatch` unless BOUNDARY coincides with
    every optimal permutation being the identity or the anti-identity.
    """
    idx = profile.minimizers(tol)
    last = profile.a_grid.size - 1
    boundary = bool(np.all((idx <= 1) | (idx >= last - 1)))
    kinds = [identity_like(p.sigma) for p in oracle.argmin]
    only_id = all(k is not None for k in kinds)
    if boundary != only_id:
        raise BoundaryMismatch(
            f"profile minimizers {idx.tolist()} ({'boundary' if boundary else 'interior'}) "
            f"but optimal permutations are {[p.sigma for p in oracle.argmin]}"
        )
    return Classification(BOUNDARY if boundary else INTERIOR, idx, profile.a_star, kinds, True)


def dumps_profile_csv(profile: FGProfile) -> str:
    buf = io.StringIO()
    buf.write("a,f,g,fPlusG\n")
    for a, f, g in zip(profile.a_grid, profile.f, profile.g):
        buf.write(f"{a!r},{f!r},{g!r},{f + g!r}\n")
    return buf.getvalue()


__all__ = [
    "BOUNDARY",
    "INTERIOR",
    "Classification",
    "FGProfile",
    "BoundaryMismatch",
    "classify_optimum",
    "dumps_profile_csv",
    "XI_VARIANTS",
    "make_xi_datasets",
    "profile_fg",
    "w_bounds",
]
