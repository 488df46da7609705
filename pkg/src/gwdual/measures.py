"""Weighted point clouds in R^d and the random test distributions."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHT_RENORM_TOL = 1e-9


class MeasureFormatError(ValueError):
    """Raised when a measure file cannot be parsed or violates the invariants."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Philox is keyed through a SeedSequence whose spawn key is the stream id, so
    task ``k`` of a sweep draws the same numbers no matter which worker runs it.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Translation:
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("translation must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure ``sum_i w_i delta_{x_i}`` on R^d.

    Points are stored as an ``(n, d)`` array. Weights within ``1e-9`` of
    summing to one are renormalized (left untouched inside ``1e-12`` so that
    file round-trips stay bit-exact); anything further off is rejected.
    Both arrays are made read-only after construction.
    """

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be an (n, d) array with n, d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        n = pts.shape[0]
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != n:
                raise ValueError(f"got {w.shape[0]} weights for {n} points")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("weights must be finite and strictly positive")
            total = w.sum()
            if abs(total - 1.0) > WEIGHT_RENORM_TOL:
                raise ValueError(f"weights sum to {total!r}, expected 1")
            if abs(total - 1.0) > 1e-12:
                w = w / total
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def is_uniform(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.n) <= tol))

    def covariance(self) -> np.ndarray:
        z = self.points - self.mean
        return (z * self.weights[:, None]).T @ z

    def map_points(self, fn) -> "DiscreteMeasure":
        return DiscreteMeasure(fn(np.array(self.points)), self.weights)

    def pad(self, dim: int) -> "DiscreteMeasure":
        """Embed into R^dim by appending zero coordinates."""
        if dim < self.dim:
            raise ValueError("cannot pad to a smaller dimension")
        z = np.zeros((self.n, dim))
        z[:, : self.dim] = self.points
        return DiscreteMeasure(z, self.weights)


def center(m: DiscreteMeasure) -> tuple[DiscreteMeasure, Translation]:
    mean = m.mean
    pts = m.points - mean
    # second pass removes the rounding left by the first subtraction
    pts = pts - m.weights @ pts
    return DiscreteMeasure(pts, m.weights), Translation(mean)


def is_centered(m: DiscreteMeasure, tol: float = 1e-8) -> bool:
    return float(np.linalg.norm(m.mean)) <= tol


def moment(m: DiscreteMeasure, p: float) -> float:
    """p-th absolute moment ``sum_i w_i ||x_i||^p``."""
    if p <= 0:
        raise ValueError("p must be positive")
    norms = np.linalg.norm(m.points, axis=1)
    return float(m.weights @ norms**p)


def pairwise_fourth_energy(m: DiscreteMeasure) -> float:
    """``sum_{i,j} w_i w_j ||x_i - x_j||^4``."""
    sq = squared_distances(m.points, m.points)
    return float(m.weights @ (sq**2) @ m.weights)


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def sample_uniform_ball(d: int, radius: float, n: int, seed: int, stream: int = 0) -> DiscreteMeasure:
    """n i.i.d. points uniform in the closed ball ``B_d(0, radius)``."""
    if d < 1 or n < 1 or radius <= 0:
        raise ValueError("need d >= 1, n >= 1 and radius > 0")
    rng = make_rng(seed, stream)
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    r = radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
    return DiscreteMeasure(g / norms * r)


def random_measure(n: int, d: int, rng: np.random.Generator, uniform: bool = True) -> DiscreteMeasure:
    pts = rng.standard_normal((n, d))
    if uniform:
        return DiscreteMeasure(pts)
    w = rng.uniform(0.2, 1.0, size=n)
    return DiscreteMeasure(pts, w / w.sum())


# -- file formats -----------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_csv(m: DiscreteMeasure) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{k + 1}" for k in range(m.dim)] + ["w"])
    for x, w in zip(m.points, m.weights):
        writer.writerow([_fmt(v) for v in x] + [_fmt(w)])
    return buf.getvalue()


def loads_csv(text: str) -> DiscreteMeasure:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise MeasureFormatError("line 1: empty measure file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    expected = [f"x{k + 1}" for k in range(d)] + ["w"]
    if d < 1 or header != expected:
        raise MeasureFormatError(f"line 1: header must be {','.join(expected) if d >= 1 else 'x1,...,xd,w'}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise MeasureFormatError(f"line {lineno}: expected {d + 1} columns, got {len(row)}")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise MeasureFormatError(f"line {lineno}, column {col}: cannot parse {cell!r}") from None
        data.append(vals)
    if not data:
        raise MeasureFormatError("line 2: no atoms")
    arr = np.array(data)
    return _build(arr[:, :d], arr[:, d])


def dumps_json(m: DiscreteMeasure) -> str:
    return json.dumps({"points": m.points.tolist(), "weights": m.weights.tolist()})


def loads_json(text: str) -> DiscreteMeasure:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeasureFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict) or "points" not in obj:
        raise MeasureFormatError("line 1, column 1: expected an object with 'points' and 'weights'")
    pts = np.array(obj["points"], dtype=float)
    w = obj.get("weights")
    w = np.full(len(pts), 1.0 / len(pts)) if w is None else np.array(w, dtype=float)
    return _build(pts, w)


def _build(points, weights) -> DiscreteMeasure:
    try:
        return DiscreteMeasure(points, weights)
    except ValueError as exc:
        raise MeasureFormatError(str(exc)) from None


def load_measure(path, format: str | None = None) -> DiscreteMeasure:
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    text = path.read_text()
    if fmt == "json":
        return loads_json(text)
    if fmt == "csv":
        return loads_csv(text)
    raise ValueError(f"unknown measure format {fmt!r}")


def save_measure(m: DiscreteMeasure, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "json":
        path.write_text(dumps_json(m))
    elif fmt == "csv":
        path.write_text(dumps_csv(m))
    else:
        raise ValueError(f"unknown measure format {fmt!r}")
