"""Algebra of the generalized (2, 2k) dual.

Write ``z = (x, y)`` and ``z' = (x', y')``. The coupling-dependent part of the
(2, 2k) distortion cost is built from

    P = -2 (|x|^2 - 2 x.x' + |x'|^2)^k (|y|^2 - 2 y.y' + |y'|^2)^k
        + 2 |x|^2k |y|^2k + 2 |x'|^2k |y'|^2k.

Expanding ``P`` into products ``m(z) m'(z')`` of monomials, terms in which both
factors are pure (only ``x`` or only ``y`` variables) integrate against
``pi (x) pi`` to products of marginal moments. They are kept apart as the
remainder ``R``; every other term involves a mixed monomial and is collected
into a symmetric matrix ``C`` over a monomial basis ``f``, so that

    P(z, z') = 4 sum_ij C_ij f_i(z) f_j(z') + R(z, z').

With this normalization the k = 1 matrix for scalars is the familiar 5x5
matrix over ``{x, y, x y^2, x^2 y, x y}``. Diagonalizing ``C`` turns
``v^T C v`` (``v = int f dpi``) into a difference of squares of linear forms
``g_i``, which is what the signed-squares dual linearizes.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteMeasure, is_centered

MAX_BASIS = 5000
EIG_RTOL = 1e-12

Exponent = tuple  # exponents of (x_1..x_dx, y_1..y_dy)


# ---------------------------------------------------------------- polynomials
# A polynomial in (z, z') is a dict {(e, e'): coefficient}.


def _mul(p: dict, q: dict) -> dict:
    out: dict = defaultdict(float)
    for (e1, f1), c1 in p.items():
        for (e2, f2), c2 in q.items():
            key = (tuple(a + b for a, b in zip(e1, e2)), tuple(a + b for a, b in zip(f1, f2)))
            out[key] += c1 * c2
    return {k: v for k, v in out.items() if v != 0.0}


def _add(p: dict, q: dict, scale: float = 1.0) -> dict:
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0.0) + scale * v
        if out[k] == 0.0:
            del out[k]
    return out


def _pow(p: dict, k: int, one: dict) -> dict:
    out = one
    for _ in range(k):
        out = _mul(out, p)
    return out


def _unit(n_vars: int, idx: int) -> Exponent:
    e = [0] * n_vars
    e[idx] = 1
    return tuple(e)


def _distance_poly(idx: range, n_vars: int) -> dict:
    """``|u|^2 - 2 u.u' + |u'|^2`` over the variables in ``idx``."""
    zero = (0,) * n_vars
    p: dict = defaultdict(float)
    for i in idx:
        sq = tuple(2 if j == i else 0 for j in range(n_vars))
        u = _unit(n_vars, i)
        p[(sq, zero)] += 1.0
        p[(zero, sq)] += 1.0
        p[(u, u)] += -2.0
    return dict(p)


def _norm_power_poly(idx: range, n_vars: int, k: int, primed: bool) -> dict:
    """``|u|^2k`` (in ``z`` or ``z'``) as a polynomial."""
    zero = (0,) * n_vars
    sq = {}
    for i in idx:
        e = tuple(2 if j == i else 0 for j in range(n_vars))
        sq[(zero, e) if primed else (e, zero)] = 1.0
    return _pow(sq, k, {(zero, zero): 1.0})


# ---------------------------------------------------------------- expansion


@dataclass
class QuadraticExpansion:
    basis: list
    coeff: np.ndarray
    k: int
    dims: tuple
    remainder: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return len(self.basis)

    def basis_names(self) -> list[str]:
        return [monomial_name(e, self.dims) for e in self.basis]

    def evaluate_basis(self, x, y) -> np.ndarray:
        """Basis monomials at points; ``x`` is ``(..., dx)``, ``y`` is ``(..., dy)``."""
        return _eval_monomials(self.basis, x, y, self.dims)

    def remainder_value(self, x, y, xp, yp) -> np.ndarray:
        keys = list(self.remainder)
        if not keys:
            return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1]))
        left = _eval_monomials([a for a, _ in keys], x, y, self.dims)
        right = _eval_monomials([b for _, b in keys], xp, yp, self.dims)
        coef = np.array([self.remainder[key] for key in keys])
        return np.sum(left * right * coef, axis=-1)

    def bilinear_value(self, x, y, xp, yp) -> np.ndarray:
        """``4 f(z)^T C f(z') + R(z, z')``."""
        fz = self.evaluate_basis(x, y)
        fzp = self.evaluate_basis(xp, yp)
        return 4.0 * np.einsum("...i,ij,...j->...", fz, self.coeff, fzp) + self.remainder_value(x, y, xp, yp)


def monomial_name(e: Exponent, dims) -> str:
    dx, dy = dims
    parts = []
    for i, p in enumerate(e):
        if p == 0:
            continue
        var = f"x{i + 1}" if i < dx else f"y{i - dx + 1}"
        if dx == 1 and i < dx:
            var = "x"
        if dy == 1 and i >= dx:
            var = "y"
        parts.append(var if p == 1 else f"{var}^{p}")
    return "*".join(parts) if parts else "1"


def _eval_monomials(exps, x, y, dims) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != dims[0] or y.shape[-1] != dims[1]:
        raise ValueError(f"expected points of dimensions {dims}, got {x.shape[-1]} and {y.shape[-1]}")
    shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    z = np.concatenate([np.broadcast_to(x, shape + (dims[0],)), np.broadcast_to(y, shape + (dims[1],))], axis=-1)
    e = np.asarray(exps, dtype=float).reshape(len(exps), sum(dims))
    return np.prod(z[..., None, :] ** e, axis=-1)


def _is_pure(e: Exponent, dx: int) -> bool:
    return sum(e[:dx]) == 0 or sum(e[dx:]) == 0


def _k1_key(e: Exponent, dx: int):
    """Family order ``x_i, y_j, x_i y_j^2, x_i^2 y_j, x_i y_j`` for k = 1."""
    xs, ys = e[:dx], e[dx:]
    sx, sy = sum(xs), sum(ys)
    family = {(1, 0): 0, (0, 1): 1, (1, 2): 2, (2, 1): 3, (1, 1): 4}.get((sx, sy), 5)
    return (family, tuple(-v for v in e))


def _grlex_key(e: Exponent):
    return (sum(e), tuple(-v for v in e))


def build_quadratic_form(k: int, dx: int, dy: int) -> QuadraticExpansion:
    """Expand the (2, 2k) distortion product and collect ``C`` (see module doc)."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if dx < 1 or dy < 1:
        raise ValueError("dimensions must be positive")
    k, dx, dy = int(k), int(dx), int(dy)
    n_vars = dx + dy
    # the number of monomials of degree <= 4k in n_vars variables bounds m
    from math import comb

    if comb(n_vars + 4 * k, 4 * k) > 50 * MAX_BASIS:
        raise ValueError(f"basis for k={k}, dims=({dx}, {dy}) would exceed {MAX_BASIS} monomials")
    zero = (0,) * n_vars
    one = {(zero, zero): 1.0}
    px = _pow(_distance_poly(range(dx), n_vars), k, one)
    py = _pow(_distance_poly(range(dx, n_vars), n_vars), k, one)
    poly = {key: -2.0 * v for key, v in _mul(px, py).items()}
    for primed in (False, True):
        diag = _mul(_norm_power_poly(range(dx), n_vars, k, primed), _norm_power_poly(range(dx, n_vars), n_vars, k, primed))
        poly = _add(poly, diag, 2.0)

    remainder = {}
    mixed = {}
    for (e, ep), c in poly.items():
        if _is_pure(e, dx) and _is_pure(ep, dx):
            remainder[(e, ep)] = c
        else:
            mixed[(e, ep)] = c
    monos = sorted({e for e, _ in mixed} | {ep for _, ep in mixed}, key=(lambda e: _k1_key(e, dx)) if k == 1 else _grlex_key)
    if len(monos) > MAX_BASIS:
        raise ValueError(f"basis has {len(monos)} monomials, above the cap of {MAX_BASIS}")
    index = {e: i for i, e in enumerate(monos)}
    coeff = np.zeros((len(monos), len(monos)))
    for (e, ep), c in mixed.items():
        coeff[index[e], index[ep]] += c / 4.0
    if not np.allclose(coeff, coeff.T, rtol=0, atol=1e-12):
        raise RuntimeError("expanded coefficient matrix is not symmetric")
    coeff = 0.5 * (coeff + coeff.T)
    return QuadraticExpansion(monos, coeff, k, (dx, dy), remainder)


# ---------------------------------------------------------------- signed squares


@dataclass
class SignedSquares:
    # row i holds the coefficients of g_i over the basis
    coefficients: np.ndarray
    eigenvalues: np.ndarray
    ell: int

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.eigenvalues > 0, 1.0, -1.0)

    def value(self, v) -> float:
        """``sum_{i<=ell} (g_i . v)^2 - sum_{i>ell} (g_i . v)^2``."""
        s = self.coefficients @ np.asarray(v, dtype=float)
        return float(np.sum(self.signs * s * s))

    def reconstruct(self) -> np.ndarray:
        g = self.coefficients
        return (g.T * self.signs) @ g


def _components(c: np.ndarray) -> list[list[int]]:
    m = c.shape[0]
    seen = [False] * m
    comps = []
    for s in range(m):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(c[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        comps.append(sorted(comp))
    return comps


def diagonalize(exp_or_matrix) -> SignedSquares:
    """Symmetric eigendecomposition of ``C`` into signed squares.

    The matrix is split into the connected components of its sparsity
    pattern, which keeps the ``g_i`` sparse. Eigenvalues below
    ``1e-12 ||C||_op`` in magnitude are dropped, the rest are ordered from
    largest to smallest (stable across components) and each eigenvector is
    signed so its first nonzero entry is positive.
    """
    c = np.asarray(getattr(exp_or_matrix, "coeff", exp_or_matrix), dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("C must be a square matrix")
    if not np.allclose(c, c.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(c).max(initial=0.0)))):
        raise ValueError("C must be symmetric")
    m = c.shape[0]
    norm = float(np.linalg.norm(c, 2)) if m else 0.0
    if norm == 0.0:
        return SignedSquares(np.zeros((0, m)), np.zeros(0), 0)
    found = []
    for comp in _components(c):
        lam, vec = np.linalg.eigh(c[np.ix_(comp, comp)])
        for t in range(lam.size):
            if abs(lam[t]) < EIG_RTOL * norm:
                continue
            u = np.zeros(m)
            u[comp] = vec[:, t]
            first = u[np.flatnonzero(np.abs(u) > 1e-14)[0]]
            if first < 0:
                u = -u
            found.append((float(lam[t]), u))
    found.sort(key=lambda p: -p[0])
    lam = np.array([p[0] for p in found])
    g = np.array([np.sqrt(abs(p[0])) * p[1] for p in found]).reshape(len(found), m)
    return SignedSquares(g, lam, int(np.sum(lam > 0)))


# ---------------------------------------------------------------- dual cost


def gen_dual_cost(exp: QuadraticExpansion, squares: SignedSquares, a, b):
    """Cost ``c_{a,b}(x, y) = -|x|^2k |y|^2k + sum a_i G_i - sum b_i G_{ell+i}``.

    ``G_i = 2 g_i``, the normalization under which
    ``4 sup_a inf_b {-|a|^2 + |b|^2 + int c_{a,b} dpi}`` equals
    ``-4 int |x|^2k |y|^2k dpi + 4 v(pi)^T C v(pi)``. Returns a function of
    ``(x, y)`` arrays shaped ``(..., dx)`` and ``(..., dy)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    ell = squares.ell
    r = squares.coefficients.shape[0]
    if a.shape != (ell,) or b.shape != (r - ell,):
        raise ValueError(f"expected a of length {ell} and b of length {r - ell}, got {a.size} and {b.size}")
    if squares.coefficients.shape[1] != exp.m:
        raise ValueError("signed squares do not match the expansion basis")
    weights = 2.0 * (a @ squares.coefficients[:ell] - b @ squares.coefficients[ell:])
    k = exp.k

    def cost(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        base = -np.sum(x * x, axis=-1) ** k * np.sum(y * y, axis=-1) ** k
        return base + exp.evaluate_basis(x, y) @ weights

    return cost


def moment_vector(exp: QuadraticExpansion, mu: DiscreteMeasure, nu: DiscreteMeasure, plan) -> np.ndarray:
    """``v(pi) = int f dpi`` for a coupling table ``plan``."""
    plan = np.asarray(plan, dtype=float)
    if plan.shape != (mu.n, nu.n):
        raise ValueError(f"plan has shape {plan.shape}, expected {(mu.n, nu.n)}")
    f = exp.evaluate_basis(mu.points[:, None, :], nu.points[None, :, :])
    return np.einsum("ij,ijk->k", plan, f)


def verify_centered_k1(mu: DiscreteMeasure, nu: DiscreteMeasure, plan) -> tuple[float, float]:
    """``(v^T C v, -2 (int x y dpi)^2)`` for centered scalar measures; they agree."""
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("the k = 1 reduction check is for one-dimensional measures")
    if not (is_centered(mu) and is_centered(nu)):
        raise ValueError("measures must be centered")
    exp = build_quadratic_form(1, 1, 1)
    v = moment_vector(exp, mu, nu, plan)
    xy = float(mu.points[:, 0] @ np.asarray(plan) @ nu.points[:, 0])
    return float(v @ exp.coeff @ v), -2.0 * xy * xy


def dumps_json(exp: QuadraticExpansion, squares: SignedSquares | None = None) -> str:
    squares = diagonalize(exp) if squares is None else squares
    doc = {
        "k": exp.k,
        "dims": list(exp.dims),
        "basis": exp.basis_names(),
        "C": exp.coeff.tolist(),
        "ell": squares.ell,
        "eigenvalues": squares.eigenvalues.tolist(),
        "g": squares.coefficients.tolist(),
    }
    return json.dumps(doc, indent=2)
