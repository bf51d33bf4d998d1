"""Monte Carlo excess-risk experiments over grids of (d, n).

Each trial draws ``n`` i.i.d. points from a finite-support distribution,
solves ERM on the ball and records ``F(w_hat) - F(w*)`` exactly.  Trial
randomness comes from ``SeedSequence(trial_seed, spawn_key=(d, n, t))``, so
every trial is reproducible on its own and results do not depend on how
trials are spread over worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BadDelta, InsufficientTrials, RangeError, TooFewAtoms
from .geometry import Ball
from .losses import EmpiricalObjective, LossModel, make_loss
from .solver import DiscreteDistribution, minimize_empirical, minimize_population, tolerance_for

FLAG_CAP = 1e-3
TRIALS_PER_DELTA = 50
MIN_TRIALS = 100


@dataclass(frozen=True)
class ExperimentConfig:
    loss_kind: str = "squared"
    radius_r: float = 1.0
    ball_b: float = 1.0
    dims: tuple[int, ...] = (5,)
    sample_sizes: tuple[int, ...] = (100, 200)
    trials: int = 100
    deltas: tuple[float, ...] = (0.1,)
    distribution_seed: int = 0
    trial_seed: int = 0
    atoms: int = 40
    bound_constant: float = 1.0

    def __post_init__(self):
        for name in ("dims", "sample_sizes", "deltas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.loss_kind not in ("squared", "logistic"):
            raise RangeError(f"loss must be 'squared' or 'logistic', got {self.loss_kind!r}")
        if not (self.dims and self.sample_sizes and self.deltas):
            raise RangeError("dims, ns and deltas must be nonempty")
        if any(d < 1 for d in self.dims) or any(n < 1 for n in self.sample_sizes):
            raise RangeError("dimensions and sample sizes must be positive")
        for delta in self.deltas:
            if not 0.0 < delta < 1.0:
                raise RangeError(f"delta={delta} is outside (0, 1)")
        if self.radius_r <= 0 or self.ball_b <= 0:
            raise RangeError("radii must be positive")
        if self.atoms < 2:
            raise RangeError("atoms must be >= 2")
        if self.bound_constant <= 0:
            raise RangeError("bound_constant must be positive")
        needed = max(MIN_TRIALS, math.ceil(TRIALS_PER_DELTA / min(self.deltas) - 1e-9))
        if self.trials < needed:
            raise RangeError(
                f"trials={self.trials} is below the trials >= 50/delta_min rule "
                f"(delta_min={min(self.deltas)} needs {needed})")

    def loss(self) -> LossModel:
        return make_loss(self.loss_kind, self.radius_r, self.ball_b)


def make_distribution(loss_kind: str, dim: int, atoms: int, rng_seed,
                      radius_r: float = 1.0, ball_b: float = 1.0) -> DiscreteDistribution:
    """Random finite-support distribution respecting the loss's data bounds.

    Features are uniform directions scaled to ``feature_radius * U(0.3, 1)``.
    Squared-loss labels are uniform on ``[-R, R]``.  Logistic labels are
    folded in: each feature point becomes two atoms ``(x, +1)``, ``(x, -1)``
    carrying an atom-specific split of its mass.
    """
    if atoms < 2:
        raise TooFewAtoms(f"need at least 2 atoms, got {atoms}")
    loss = make_loss(loss_kind, radius_r, ball_b)
    rng = np.random.default_rng(rng_seed)
    g = rng.standard_normal((atoms, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    x = g * (loss.feature_radius * rng.uniform(0.3, 1.0, atoms))[:, None]
    weights = rng.uniform(0.2, 1.0, atoms)
    p = weights / weights.sum()
    if loss_kind == "squared":
        y = rng.uniform(-radius_r, radius_r, atoms)
        return DiscreteDistribution(x, y, _renormalize(p))
    pi = rng.uniform(0.1, 0.9, atoms)
    x2 = np.concatenate([x, x])
    y2 = np.concatenate([np.ones(atoms), -np.ones(atoms)])
    p2 = np.concatenate([p * pi, p * (1.0 - pi)])
    return DiscreteDistribution(x2, y2, _renormalize(p2))


def _renormalize(p: np.ndarray) -> np.ndarray:
    p = p / math.fsum(p)
    # push the residual rounding onto the largest entry
    p[np.argmax(p)] += 1.0 - math.fsum(p)
    return p


def distribution_for(cfg: ExperimentConfig, d: int) -> DiscreteDistribution:
    seed = np.random.SeedSequence(cfg.distribution_seed, spawn_key=(d,))
    return make_distribution(cfg.loss_kind, d, cfg.atoms, seed, cfg.radius_r, cfg.ball_b)


def trial_rng(trial_seed: int, d: int, n: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(trial_seed, spawn_key=(d, n, t)))


def theory_bound(loss: LossModel, d: int, n: int, delta: float, c: float = 1.0,
                 corollary: bool = False) -> float:
    """``c L^2 (d + log(1/delta)) / (sigma n)``.

    With ``corollary=True`` the complexity term is
    ``min(d + log(1/delta), log(n) log(1/delta))``.
    """
    if not 0.0 < delta < 1.0:
        raise BadDelta(f"delta must lie in (0, 1), got {delta}")
    log_inv = math.log(1.0 / delta)
    complexity = d + log_inv
    if corollary:
        complexity = min(complexity, math.log(n) * log_inv)
    return c * loss.lipschitz**2 * complexity / (loss.sigma * n)


def empirical_quantile(sorted_values: np.ndarray, delta: float) -> float:
    """Order statistic at 1-based index ``ceil((1 - delta) * T)``."""
    t = sorted_values.size
    k = math.ceil((1.0 - delta) * t - 1e-9)
    k = min(max(k, 1), t)
    return float(sorted_values[k - 1])


@dataclass
class CellResult:
    d: int
    n: int
    excess: np.ndarray
    converged: np.ndarray
    w_star: np.ndarray
    deltas: tuple[float, ...]

    def __post_init__(self):
        good = np.sort(self.excess[self.converged])
        self.sorted = good
        self.quantiles = {delta: empirical_quantile(good, delta) for delta in self.deltas}
        self.mean = float(good.mean())
        self.median = float(np.median(good))

    @property
    def flagged(self) -> int:
        return int((~self.converged).sum())

    @property
    def failed(self) -> bool:
        return self.flagged > FLAG_CAP * self.excess.size


@dataclass(frozen=True)
class Slope:
    kind: str  # "n" or "d"
    fixed: int
    statistic: str
    slope: float
    stderr: float
    intercept: float


@dataclass
class RiskSweepResult:
    config: ExperimentConfig
    cells: dict[tuple[int, int], CellResult] = field(default_factory=dict)

    def cell(self, d: int, n: int) -> CellResult:
        return self.cells[(d, n)]

    def statistic(self, cell: CellResult, name: str) -> float:
        if name == "median":
            return cell.median
        return cell.quantiles[float(name[1:])]

    def statistics(self) -> list[str]:
        return ["median"] + [f"q{delta!r}" for delta in self.config.deltas]

    def _fit(self, kind, fixed, xs, cells, name) -> Slope | None:
        ys = [self.statistic(c, name) for c in cells]
        if len(xs) < 2 or min(ys) <= 0:
            return None
        fit = stats.linregress(np.log(xs), np.log(ys))
        err = float(fit.stderr) if len(xs) > 2 else float("nan")
        return Slope(kind, fixed, name, float(fit.slope), err, float(fit.intercept))

    def slopes(self) -> list[Slope]:
        cfg = self.config
        out = []
        for name in self.statistics():
            for d in cfg.dims:
                ns = sorted(cfg.sample_sizes)
                s = self._fit("n", d, ns, [self.cell(d, n) for n in ns], name)
                if s is not None:
                    out.append(s)
            for n in cfg.sample_sizes:
                ds = sorted(cfg.dims)
                s = self._fit("d", n, ds, [self.cell(d, n) for d in ds], name)
                if s is not None:
                    out.append(s)
        return out

    def slope_n(self, d: int, delta: float) -> float:
        for s in self.slopes():
            if s.kind == "n" and s.fixed == d and s.statistic == f"q{delta!r}":
                return s.slope
        raise KeyError("slope in n needs at least two sample sizes")

    def slope_d(self, n: int, delta: float) -> float:
        for s in self.slopes():
            if s.kind == "d" and s.fixed == n and s.statistic == f"q{delta!r}":
                return s.slope
        raise KeyError("slope in d needs at least two dimensions")


def _cell_setup(cfg: ExperimentConfig, d: int):
    loss = cfg.loss()
    dist = distribution_for(cfg, d)
    domain = Ball.centered(d, loss.domain_radius)
    tol = tolerance_for(loss, d, max(cfg.sample_sizes))
    w_star = minimize_population(loss, dist, domain, tol).w_hat
    return loss, dist, domain, w_star


def _run_trials(cfg: ExperimentConfig, d: int, n: int, start: int, stop: int):
    """Trials ``start..stop-1`` of cell (d, n); safe to run in a worker process."""
    loss, dist, domain, w_star = _cell_setup(cfg, d)
    tol = tolerance_for(loss, d, n)
    pop = dist.objective(loss)
    f_star = pop.per_atom(w_star)
    excess = np.empty(stop - start)
    converged = np.empty(stop - start, dtype=bool)
    for i, t in enumerate(range(start, stop)):
        rng = trial_rng(cfg.trial_seed, d, n, t)
        counts = rng.multinomial(n, dist.probabilities)
        keep = counts > 0
        obj = EmpiricalObjective(loss, dist.x[keep], dist.y[keep], counts[keep], validate=False)
        res = minimize_empirical(obj, domain, tol, raise_on_failure=False)
        excess[i] = float((pop.per_atom(res.w_hat) - f_star) @ pop.weights)
        converged[i] = res.converged
    return excess, converged


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("ERMLAB_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_sweep(cfg: ExperimentConfig, threads: int | None = None,
              chunk: int = 250) -> RiskSweepResult:
    threads = resolve_threads(threads)
    result = RiskSweepResult(cfg)
    jobs = []
    for d in cfg.dims:
        for n in cfg.sample_sizes:
            for start in range(0, cfg.trials, chunk):
                jobs.append((d, n, start, min(start + chunk, cfg.trials)))
    if threads == 1:
        outputs = [_run_trials(cfg, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_trials, cfg, *job) for job in jobs]
            outputs = [f.result() for f in futures]
    w_stars = {d: _cell_setup(cfg, d)[3] for d in cfg.dims}
    by_cell: dict[tuple[int, int], list] = {}
    for (d, n, _, _), out in zip(jobs, outputs):
        by_cell.setdefault((d, n), []).append(out)
    for (d, n), parts in by_cell.items():
        raw = np.concatenate([p[0] for p in parts])
        conv = np.concatenate([p[1] for p in parts])
        excess = np.where((raw < 0) & (raw >= -1e-12), 0.0, raw)
        result.cells[(d, n)] = CellResult(d, n, excess, conv, w_stars[d], cfg.deltas)
    return result


@dataclass(frozen=True)
class TailProfile:
    quantiles: list[tuple[float, float]]
    ratios: list[tuple[float, float, float]]


def tail_profile(result: RiskSweepResult, d: int, n: int) -> TailProfile:
    """Quantiles by delta plus the normalized gap ratio for consecutive deltas.

    ``rho = (q(d2) - q(d1)) n / (L^2 (log(1/d2) - log(1/d1)) / sigma)``.
    """
    cell = result.cell(d, n)
    deltas = sorted(set(result.config.deltas), reverse=True)
    needed = TRIALS_PER_DELTA / min(deltas)
    if cell.sorted.size < needed:
        raise InsufficientTrials(f"{cell.sorted.size} usable trials < {needed:.0f}")
    loss = result.config.loss()
    quantiles = [(delta, cell.quantiles[delta]) for delta in deltas]
    ratios = []
    for (d1, q1), (d2, q2) in zip(quantiles, quantiles[1:]):
        gap = math.log(1.0 / d2) - math.log(1.0 / d1)
        if gap == 0:
            continue
        rho = (q2 - q1) * n / (loss.lipschitz**2 * gap / loss.sigma)
        ratios.append((d1, d2, rho))
    return TailProfile(quantiles, ratios)


def calibrate_constant(result: RiskSweepResult, d: int, n: int, delta: float) -> float:
    """Constant ``c`` making ``theory_bound`` equal the observed quantile of one cell."""
    loss = result.config.loss()
    return result.cell(d, n).quantiles[delta] / theory_bound(loss, d, n, delta, 1.0)


def bound_domination_ratio(result: RiskSweepResult, c: float) -> float:
    """Largest ``quantile / theory_bound(c)`` over all cells and deltas."""
    loss = result.config.loss()
    worst = 0.0
    for (d, n), cell in result.cells.items():
        for delta, q in cell.quantiles.items():
            worst = max(worst, q / theory_bound(loss, d, n, delta, c))
    return worst
