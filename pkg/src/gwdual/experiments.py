"""Desk-scale experiments: entropic gap, plan convergence, rates, identities.

Every sweep is deterministic given its configuration: random draws come from
``make_rng(seed, stream)`` with streams derived from the task index, tasks may
run on a thread pool, and results are reduced by index. CSV output starts with
``# gw-dual v1`` followed by ``# key=value`` metadata lines.
"""

from __future__ import annotations

import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import egw, gw
from .measures import (
    DiscreteMeasure,
    center,
    make_rng,
    pairwise_fourth_energy,
    random_measure,
    sample_uniform_ball,
)
from .one_dim import classify_optimum, dumps_profile_csv, make_xi_datasets, profile_fg
from .oracle import brute_force_gw_uniform, permutation_plan

log = logging.getLogger(__name__)

CSV_VERSION = "# gw-dual v1"


# ---------------------------------------------------------------- config / report


@dataclass
class SweepConfig:
    seed: int = 0
    trials: int = 30
    n_grid: list = field(default_factory=lambda: [64, 128, 256, 512])
    epsilon_grid: list = field(default_factory=lambda: [1.0])
    dims: tuple = (2, 2)
    tolerances: dict = field(default_factory=dict)
    output_path: str | None = None
    threads: int = 1

    def __post_init__(self):
        self.n_grid = [int(v) for v in self.n_grid]
        self.epsilon_grid = [float(v) for v in self.epsilon_grid]
        self.dims = tuple(int(v) for v in self.dims)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for name in ("n_grid", "epsilon_grid"):
            g = getattr(self, name)
            if not g:
                raise ValueError(f"{name} must be nonempty")
            d = np.diff(g)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError(f"{name} must be strictly monotone")
        if len(self.dims) != 2 or min(self.dims) < 1:
            raise ValueError("dims must be two positive integers")

    def tol(self, name: str, default):
        return self.tolerances.get(name, default)

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        aliases = {"nGrid": "n_grid", "epsilonGrid": "epsilon_grid", "outputPath": "output_path"}
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {}
        for k, v in doc.items():
            k = aliases.get(k, k)
            if k not in known:
                raise ValueError(f"unknown config field {k!r}")
            kwargs[k] = v
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SolveReport:
    command: list
    s1: float
    s2: float
    total: float
    a_star: list
    epsilon: float
    converged: bool
    outer_iterations: int
    fixed_point_residual: float
    wall_time: float
    settings: dict
    multistart: list = field(default_factory=list)
    translations: list = field(default_factory=list)

    def __post_init__(self):
        if abs(self.total - (self.s1 + self.s2)) > 1e-10 * (1.0 + abs(self.total)):
            raise ValueError("report total does not equal s1 + s2")

    @property
    def sqrt_total(self) -> float | None:
        return math.sqrt(self.total) if self.total >= 0 else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sqrt_total"] = self.sqrt_total
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def report_from_solution(sol, command, wall_time) -> SolveReport:
    settings = {k: v for k, v in sol.settings.items() if isinstance(v, (int, float, str, bool, type(None)))}
    settings.setdefault("sinkhorn_tol", 1e-9)
    return SolveReport(
        command=list(command),
        s1=float(sol.s1),
        s2=float(sol.s2),
        total=float(sol.total_value),
        a_star=sol.a_star.a.tolist(),
        epsilon=float(sol.epsilon),
        converged=bool(sol.converged),
        outer_iterations=int(sol.outer_iterations),
        fixed_point_residual=float(sol.fixed_point_residual),
        wall_time=float(wall_time),
        settings=settings,
        multistart=[[label, float(v)] for label, v in sol.multistart_log],
        translations=[t.vector.tolist() for t in sol.translations],
    )


def solve_report(mu, nu, epsilon: float = 0.0, command=(), **opts) -> SolveReport:
    t0 = time.perf_counter()
    sol = gw(mu, nu, **opts) if epsilon == 0 else egw(mu, nu, epsilon, **opts)
    return report_from_solution(sol, command, time.perf_counter() - t0)


# ---------------------------------------------------------------- CSV helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(columns, rows, meta: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={_fmt(v)}\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _pool_map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------- entropic gap


@dataclass
class GapRow:
    epsilon: float
    egw: float
    gap: float
    ratio: float | None
    converged: bool


def gap_instance(seed: int, n: int = 6, d: int = 2) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    rng = make_rng(seed, 0)
    return random_measure(n, d, rng), random_measure(n, d, rng)


def gap_sweep(mu, nu, epsilons, threads: int = 1, **opts) -> tuple[float, list[GapRow]]:
    """``S_eps - D^2`` along ``epsilons``; the GW optimum seeds every EGW solve."""
    base = gw(mu, nu, **opts)
    seed_a = [base.a_star.a]

    def one(eps):
        return egw(mu, nu, eps, extra_starts=seed_a, **opts)

    sols = _pool_map(one, list(epsilons), threads)
    rows = []
    for eps, s in zip(epsilons, sols):
        gap = s.total_value - base.total_value
        ratio = gap / (eps * math.log(1.0 / eps)) if eps < 1 else None
        rows.append(GapRow(float(eps), s.total_value, gap, ratio, s.converged))
    return base.total_value, rows


def gap_sweep_csv(gw_value, rows, meta=None) -> str:
    m = {"gw": gw_value, **(meta or {})}
    return write_csv(
        ["epsilon", "egwValue", "gap", "ratio"],
        [(r.epsilon, r.egw, r.gap, r.ratio) for r in rows],
        m,
    )


# ---------------------------------------------------------------- plan convergence


@dataclass
class PlanRow:
    epsilon: float
    plan_distance: float
    nearest: tuple
    converged: bool


def plan_sweep(mu, nu, epsilons, threads: int = 1, **opts):
    """Entrywise distance from the EGW plan to the nearest optimal permutation coupling."""
    oracle = brute_force_gw_uniform(mu, nu)
    perms = [permutation_plan(p.sigma) for p in oracle.argmin]

    def one(eps):
        return egw(mu, nu, eps, **opts)

    sols = _pool_map(one, list(epsilons), threads)
    rows = []
    for eps, s in zip(epsilons, sols):
        dists = [float(np.max(np.abs(s.coupling - p))) for p in perms]
        k = int(np.argmin(dists))
        rows.append(PlanRow(float(eps), dists[k], oracle.argmin[k].sigma, s.converged))
    return oracle, rows


def plan_sweep_csv(oracle, rows, meta=None) -> str:
    m = {"gw": oracle.value, "argminCount": len(oracle.argmin), **(meta or {})}
    return write_csv(["epsilon", "planDistance"], [(r.epsilon, r.plan_distance) for r in rows], m)


# ---------------------------------------------------------------- rates


def ball_moment(d: int, radius: float, p: float) -> float:
    """``int |x|^p`` for the uniform distribution on the ``d``-ball."""
    return radius**p * d / (d + p)


def scaled_ball_gw_reference(d: int) -> float:
    """``D(mu, 2#mu)^2 = 9 int |x - x'|^4 dmu dmu`` for ``mu`` uniform on the unit ball.

    Uses ``E|x-x'|^4 = 2 E|x|^4 + (2 + 4/d) (E|x|^2)^2`` for isotropic ``mu``.
    """
    m2, m4 = ball_moment(d, 1.0, 2), ball_moment(d, 1.0, 4)
    return 9.0 * (2.0 * m4 + (2.0 + 4.0 / d) * m2 * m2)


def ball_quadrature(d: int, radius: float, n_radial: int, n_angular: int = 1) -> DiscreteMeasure:
    """Deterministic weighted discretization of the uniform ball (``d`` is 1 or 2).

    Gauss-Legendre nodes in the radius (with the ``r^(d-1)`` density folded into
    the weights) times equispaced angles.
    """
    t, w = np.polynomial.legendre.leggauss(n_radial)
    if d == 1:
        return DiscreteMeasure(radius * t, w / w.sum())
    if d != 2:
        raise ValueError("ball quadrature is implemented for d = 1 and d = 2")
    r = 0.5 * radius * (t + 1.0)
    wr = w * r
    theta = (np.arange(n_angular) + 0.5) * (2 * np.pi / n_angular)
    pts = np.stack(
        [np.outer(r, np.cos(theta)).ravel(), np.outer(r, np.sin(theta)).ravel()], axis=1
    )
    wts = np.repeat(wr, n_angular)
    return DiscreteMeasure(pts, wts / wts.sum())


def quantile_points(radius: float, m: int) -> DiscreteMeasure:
    """Uniform measure on the ``m`` quantile midpoints of ``Unif[-radius, radius]``."""
    return DiscreteMeasure(-radius + 2.0 * radius * (np.arange(m) + 0.5) / m)


def _replicate(m: DiscreteMeasure, r: int) -> DiscreteMeasure:
    return DiscreteMeasure(np.repeat(m.points, r, axis=0))


@dataclass
class RateRow:
    n: int
    mean_abs_error: float
    stderr: float | None
    used: int
    failures: int


@dataclass
class RateResult:
    rows: list
    slope: float | None
    reference: float
    reference_note: str
    values: dict


def fit_slope(ns, errors) -> float | None:
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(ns[ok]), np.log(errors[ok]), 1)[0])


RATE_DEFAULTS = {
    "n_starts": 4,
    "grid_points": 33,
    "quadrature_radial": 16,
    "quadrature_angular": 48,
    "replication": 1,
}


def _rate_trial(config: SweepConfig, mode: str, estimator: str, eps: float, reference_nu, n: int, task: int):
    dx, dy = config.dims
    seed = config.seed
    n_starts = int(config.tol("n_starts", RATE_DEFAULTS["n_starts"]))
    mu = sample_uniform_ball(dx, 1.0, n, seed, 2 * task)
    if estimator == "EGW":
        nu = sample_uniform_ball(dy, 2.0, n, seed, 2 * task + 1) if mode == "TWO_SAMPLE" else reference_nu
        s = egw(mu, nu, eps, n_starts=n_starts, seed=task)
        return s.total_value, s.converged
    grid = int(config.tol("grid_points", RATE_DEFAULTS["grid_points"]))
    if mode == "TWO_SAMPLE":
        nu = sample_uniform_ball(dy, 2.0, n, seed, 2 * task + 1)
        s = gw(mu, nu, n_starts=n_starts, seed=task, grid=grid)
    else:
        r = int(config.tol("replication", RATE_DEFAULTS["replication"]))
        s = gw(_replicate(mu, r), reference_nu, n_starts=n_starts, seed=task, grid=grid)
    return s.total_value, s.converged


def rate_sweep(config: SweepConfig, mode: str = "TWO_SAMPLE", estimator: str = "EGW") -> RateResult:
    """Monte-Carlo mean of ``|value(empirical) - value(population)|`` over ``n``.

    Populations are ``Unif(B(0,1))`` in ``R^dx`` and ``Unif(B(0,2))`` in ``R^dy``.
    EGW uses ``eps = epsilon_grid[0]`` and a reference computed on deterministic
    ball quadratures. GW requires ``dx = dy``, where the pair is ``(mu, 2#mu)`` with
    reference ``9 int |x-x'|^4``; its one-sample mode is one-dimensional, with
    ``nu`` represented by ``replication * n`` quantile points.
    """
    mode, estimator = mode.upper().replace("-", "_"), estimator.upper()
    if mode not in ("ONE_SAMPLE", "TWO_SAMPLE") or estimator not in ("GW", "EGW"):
        raise ValueError("mode must be ONE_SAMPLE/TWO_SAMPLE and estimator GW/EGW")
    dx, dy = config.dims
    eps = config.epsilon_grid[0]
    ref_nu = None
    if estimator == "EGW":
        nr = int(config.tol("quadrature_radial", RATE_DEFAULTS["quadrature_radial"]))
        na = int(config.tol("quadrature_angular", RATE_DEFAULTS["quadrature_angular"]))
        qmu = ball_quadrature(dx, 1.0, nr, na)
        ref_nu = ball_quadrature(dy, 2.0, nr, na)
        n_starts = int(config.tol("n_starts", RATE_DEFAULTS["n_starts"]))
        reference = egw(qmu, ref_nu, eps, n_starts=n_starts, seed=config.seed).total_value
        note = f"EGW on ball quadratures ({nr} radial x {na if dx == 2 else 1} angular nodes)"
    else:
        if dx != dy:
            raise ValueError("the GW rate construction needs dx = dy")
        reference = scaled_ball_gw_reference(dx)
        note = "9 * int |x - x'|^4 for the unit ball (map x -> 2x)"
        if mode == "ONE_SAMPLE":
            if dx != 1:
                raise ValueError("one-sample GW rates are implemented for d = 1")
    tasks = []
    for i, n in enumerate(config.n_grid):
        for t in range(config.trials):
            tasks.append((n, i * config.trials + t))

    def run(task):
        n, idx = task
        if estimator == "GW" and mode == "ONE_SAMPLE":
            r = int(config.tol("replication", RATE_DEFAULTS["replication"]))
            nu = quantile_points(2.0, r * n)
        else:
            nu = ref_nu
        try:
            return _rate_trial(config, mode, estimator, eps, nu, n, idx)
        except Exception as exc:  # a failed trial is logged and excluded
            log.warning("trial %d (n=%d) failed: %s", idx, n, exc)
            return None

    results = _pool_map(run, tasks, config.threads)
    rows, values = [], {}
    for n in config.n_grid:
        vals = [r for (m, _), r in zip(tasks, results) if m == n]
        good = [v for v, ok in (r for r in vals if r is not None) if ok]
        failures = len(vals) - len(good)
        values[n] = good
        errs = np.abs(np.array(good) - reference)
        mean = float(errs.mean()) if errs.size else float("nan")
        se = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else None
        rows.append(RateRow(n, mean, se, len(good), failures))
    slope = fit_slope([r.n for r in rows], [r.mean_abs_error for r in rows]) if len(rows) > 1 else None
    return RateResult(rows, slope, float(reference), note, values)


def rate_sweep_csv(result: RateResult, meta=None) -> str:
    m = {
        "reference": result.reference,
        "referenceMethod": result.reference_note,
        "slope": result.slope if result.slope is not None else "undefined",
        **(meta or {}),
    }
    two_col = all(r.stderr is None for r in result.rows)
    if two_col:
        return write_csv(["n", "meanAbsError"], [(r.n, r.mean_abs_error) for r in result.rows], m)
    return write_csv(
        ["n", "meanAbsError", "stderr", "trials", "failures"],
        [(r.n, r.mean_abs_error, r.stderr, r.used, r.failures) for r in result.rows],
        m,
    )


# ---------------------------------------------------------------- scaling identity


@dataclass
class ScalingRow:
    trial: int
    n: int
    lhs: float
    rhs: float
    holds: bool


def scaling_identity_trial(n: int, d: int, seed: int, stream: int, tol: float = 1e-8) -> ScalingRow:
    """``D(m, 2#m')^2 = 4 D(m, m')^2 - 3 E_m|x-x'|^4 + 12 E_m'|y-y'|^4`` by enumeration."""
    m = sample_uniform_ball(d, 1.0, n, seed, 2 * stream)
    mp = sample_uniform_ball(d, 1.0, n, seed, 2 * stream + 1)
    scaled = mp.map_points(lambda p: 2.0 * p)
    lhs = brute_force_gw_uniform(m, scaled).value
    rhs = 4.0 * brute_force_gw_uniform(m, mp).value - 3.0 * pairwise_fourth_energy(m) + 12.0 * pairwise_fourth_energy(mp)
    return ScalingRow(stream, n, lhs, rhs, abs(lhs - rhs) <= tol * (1.0 + abs(lhs)))


def scaling_identity(config: SweepConfig, tol: float = 1e-8) -> list[ScalingRow]:
    """All trials for every ``n`` in ``config.n_grid`` (each at most 9)."""
    tasks = [(n, i * config.trials + t) for i, n in enumerate(config.n_grid) for t in range(config.trials)]
    d = config.dims[0]
    return _pool_map(lambda task: scaling_identity_trial(task[0], d, config.seed, task[1], tol), tasks, config.threads)


def scaling_identity_csv(rows, meta=None) -> str:
    return write_csv(["trial", "n", "lhs", "rhs", "holds"], [(r.trial, r.n, r.lhs, r.rhs, r.holds) for r in rows], meta)


# ---------------------------------------------------------------- one-dimensional study


@dataclass
class OneDimOutcome:
    xi: float
    profile: object
    oracle: object
    classification: object

    def csv(self) -> str:
        return CSV_VERSION + "\n" + f"# xi={self.xi!r}\n" + dumps_profile_csv(self.profile)


def one_dim_study(n: int, xis, grid_size: int = 4097, variant: str = "figure", threads: int = 1) -> list[OneDimOutcome]:
    out = []
    for xi in xis:
        mu, nu = make_xi_datasets(n, xi, variant)
        mu, _ = center(mu)
        nu, _ = center(nu)
        prof = profile_fg(mu, nu, grid_size, workers=threads)
        oracle = brute_force_gw_uniform(mu, nu, workers=threads)
        out.append(OneDimOutcome(float(xi), prof, oracle, classify_optimum(prof, oracle)))
    return out


def one_dim_summary_csv(outcomes, meta=None) -> str:
    rows = []
    for o in outcomes:
        kinds = ";".join(k or "other" for k in o.classification.argmin_kinds)
        rows.append((o.xi, o.classification.kind, o.classification.a_star, o.oracle.value, kinds))
    return write_csv(["xi", "classification", "aStar", "gw", "argminKinds"], rows, meta)


__all__ = [
    "CSV_VERSION",
    "GapRow",
    "OneDimOutcome",
    "PlanRow",
    "RateResult",
    "RateRow",
    "ScalingRow",
    "SolveReport",
    "SweepConfig",
    "ball_moment",
    "ball_quadrature",
    "fit_slope",
    "gap_instance",
    "gap_sweep",
    "gap_sweep_csv",
    "one_dim_study",
    "one_dim_summary_csv",
    "plan_sweep",
    "plan_sweep_csv",
    "quantile_points",
    "rate_sweep",
    "rate_sweep_csv",
    "report_from_solution",
    "scaled_ball_gw_reference",
    "scaling_identity",
    "scaling_identity_csv",
    "scaling_identity_trial",
    "solve_report",
    "write_csv",
]
