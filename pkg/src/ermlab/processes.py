"""Offset Rademacher processes, exact exponential moments and peeling.

Everything here works on a finite evaluation set standing in for W.  For a
sample ``Z_1..Z_n``, population minimizer ``w*`` and sign vector ``eps``, the
offset process at ``w`` is::

    (1/n) sum_i eps_i (f(w, Z_i) - f(w*, Z_i)) - (sigma/8) ||w - w*||_H^2

Exponential moments over ``eps`` are computed exactly by enumerating all
``2^n`` sign vectors.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimMismatch, NonPositiveRadius, TooManySigns
from .geometry import Annulus, Ball, project_to_ball
from .losses import EmpiricalObjective
from .seminorm import PsdSeminorm

MAX_SIGNS = 16
# keeps a (signs x eval points) block near 32 MB
_BLOCK_ELEMENTS = 4_000_000


def default_lambda(sigma: float, lipschitz: float, n: int) -> float:
    """``lambda = sigma n / (32 e L^2)``."""
    return sigma * n / (32.0 * math.e * lipschitz**2)


def log_moment_bound(d: int) -> float:
    """``log(e + e^{3d} + 14 e^{2048 (1+e)^2 d / e})`` evaluated stably."""
    terms = [1.0, 3.0 * d, math.log(14.0) + 2048.0 * (1.0 + math.e) ** 2 * d / math.e]
    return float(logsumexp(terms))


def chaining_bound(lipschitz: float, r: float, d: int, n: int) -> float:
    """Bound ``64 L r sqrt(d/n)`` on the expected local supremum."""
    return 64.0 * lipschitz * r * math.sqrt(d / n)


@dataclass
class OffsetProcessInstance:
    obj: EmpiricalObjective
    w_star: np.ndarray
    eval_set: np.ndarray
    lam: float | None = None

    def __post_init__(self):
        self.w_star = np.asarray(self.w_star, dtype=float).reshape(-1)
        self.eval_set = np.atleast_2d(np.asarray(self.eval_set, dtype=float))
        if self.eval_set.shape[1] != self.obj.dim or self.w_star.shape[0] != self.obj.dim:
            raise DimMismatch("eval_set / w_star do not match the objective dimension")
        domain = Ball.centered(self.obj.dim, self.obj.loss.domain_radius)
        if not np.all(domain.contains(self.eval_set)):
            raise ValueError("eval_set must lie inside W")
        if self.lam is None:
            loss = self.obj.loss
            self.lam = default_lambda(loss.sigma, loss.lipschitz, self.obj.n)
        sample_x, sample_y = self.obj.expanded()
        loss = self.obj.loss
        # increments f(w, Z_i) - f(w*, Z_i): shape (n, |eval_set|)
        self.increments = (loss.values(self.eval_set, sample_x, sample_y)
                           - loss.values(self.w_star, sample_x, sample_y)[None, :]).T
        self.penalty = loss.sigma / 8.0 * self.obj.h.quad(self.eval_set - self.w_star)

    @property
    def n(self) -> int:
        return self.increments.shape[0]


def offset_supremum(inst: OffsetProcessInstance, signs, offset: bool = True) -> float:
    signs = np.asarray(signs, dtype=float)
    if signs.shape != (inst.n,):
        raise DimMismatch(f"expected {inst.n} signs, got shape {signs.shape}")
    vals = signs @ inst.increments / inst.n
    if offset:
        vals = vals - inst.penalty
    return float(vals.max())


def all_sign_vectors(n: int) -> np.ndarray:
    """All ``2^n`` sign vectors; row ``k`` encodes the bits of ``k`` (bit set = -1)."""
    k = np.arange(2**n)[:, None]
    bits = (k >> np.arange(n)[None, :]) & 1
    return 1.0 - 2.0 * bits


def _block_rows(inst: OffsetProcessInstance) -> int:
    return max(1, _BLOCK_ELEMENTS // max(inst.increments.shape[1], 1))


def _sup_block(inst: OffsetProcessInstance, signs: np.ndarray, offset: bool) -> np.ndarray:
    out = np.empty(signs.shape[0])
    rows = _block_rows(inst)
    for start in range(0, signs.shape[0], rows):
        block = signs[start:start + rows] @ inst.increments / inst.n
        if offset:
            block -= inst.penalty
        out[start:start + rows] = block.max(axis=1)
    return out


def enumerate_suprema(inst: OffsetProcessInstance, offset: bool = True,
                      threads: int = 1) -> np.ndarray:
    """Supremum for every sign vector, in the order of :func:`all_sign_vectors`.

    Sign vectors are cut into fixed-size contiguous blocks that are handed to
    the workers.  Block boundaries do not depend on ``threads`` (matrix
    products can round differently for different shapes), and the result is
    assembled by index, so the output is bit-identical for any thread count.
    """
    if inst.n > MAX_SIGNS:
        raise TooManySigns(f"n={inst.n} exceeds the enumeration cap {MAX_SIGNS}")
    signs = all_sign_vectors(inst.n)
    rows = _block_rows(inst)
    blocks = [signs[s:s + rows] for s in range(0, signs.shape[0], rows)]
    if threads <= 1 or len(blocks) == 1:
        return np.concatenate([_sup_block(inst, b, offset) for b in blocks])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda b: _sup_block(inst, b, offset), blocks))
    return np.concatenate(results)


@dataclass(frozen=True)
class ExpMoment:
    moment: float
    log_moment: float
    mean_sup: float
    lam: float
    bound_log: float

    @property
    def within_bound(self) -> bool:
        return self.log_moment <= self.bound_log


def exp_moment_exhaustive(inst: OffsetProcessInstance, threads: int = 1) -> ExpMoment:
    """Exact ``E_eps exp(lambda * sup)`` over all sign vectors."""
    sups = enumerate_suprema(inst, offset=True, threads=threads)
    # uniform weights 2^{-n}: log E = logsumexp(lambda s) - n log 2
    log_moment = float(logsumexp(inst.lam * sups) - inst.n * math.log(2.0))
    return ExpMoment(
        moment=math.exp(log_moment),
        log_moment=log_moment,
        mean_sup=float(math.fsum(sups) / sups.size),
        lam=float(inst.lam),
        bound_log=log_moment_bound(inst.obj.dim),
    )


def peel_decompose(domain: Ball, w_star, h: PsdSeminorm, r: float, k_max: int) -> list[Annulus]:
    """``[W[0, r], W[r, 2r], ..., W[2^k_max r, 2^(k_max+1) r]]``."""
    if not r > 0:
        raise NonPositiveRadius(f"peeling radius must be positive, got {r}")
    shells = [Annulus(domain, w_star, h, 0.0, r)]
    for k in range(k_max + 1):
        shells.append(Annulus(domain, w_star, h, 2.0**k * r, 2.0 ** (k + 1) * r))
    return shells


def default_peeling_radius(sigma: float, lipschitz: float, d: int, n: int) -> float:
    """``r = (L / sigma) sqrt(d / n)``."""
    return lipschitz / sigma * math.sqrt(d / n)


def peeling_depth(domain: Ball, h: PsdSeminorm, r: float) -> int:
    """Smallest ``k_max`` with ``2^(k_max+1) r`` at least the H-diameter of W."""
    from .geometry import h_diameter

    diam = h_diameter(domain, h)
    k = 0
    while 2.0 ** (k + 1) * r < diam:
        k += 1
    return k


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    trials: int


def rademacher_sup_mc(inst: OffsetProcessInstance, trials: int, rng_seed: int) -> McEstimate:
    """Monte Carlo mean of the plain (no offset) multiplier-process supremum."""
    if trials < 100:
        raise ValueError("rademacher_sup_mc needs at least 100 trials")
    rng = np.random.default_rng(rng_seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(trials, inst.n))
    sups = _sup_block(inst, signs, offset=False)
    stderr = float(sups.std(ddof=1) / math.sqrt(trials))
    return McEstimate(float(sups.mean()), stderr, trials)


def ball_grid(domain: Ball, per_axis: int, boundary: bool = False) -> np.ndarray:
    """Points of a regular ``per_axis^d`` grid on the bounding box lying in W.

    With ``boundary=True`` the grid points just outside W (within one grid
    step of the sphere) are added after projection onto the sphere, so
    minimizers on the boundary are resolved as finely as interior ones.
    """
    axis = np.linspace(-domain.radius, domain.radius, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * domain.dim), indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, domain.dim) + domain.center
    inside = domain.contains(pts)
    if not boundary:
        return pts[inside]
    step = 2.0 * domain.radius / (per_axis - 1)
    near = ~inside & (np.linalg.norm(pts - domain.center, axis=1)
                      <= domain.radius + step * math.sqrt(domain.dim))
    return np.vstack([pts[inside], project_to_ball(domain, pts[near])])


def sample_multisets(n: int, atoms: int):
    """Yield every count vector of ``n`` draws over ``atoms`` categories."""
    for combo in itertools.combinations_with_replacement(range(atoms), n):
        yield np.bincount(combo, minlength=atoms)


def multinomial_probability(counts, probabilities) -> float:
    counts = np.asarray(counts, dtype=int)
    log_p = math.lgamma(counts.sum() + 1) - sum(math.lgamma(c + 1) for c in counts)
    log_p += float(np.sum(counts * np.log(np.asarray(probabilities))))
    return math.exp(log_p)


@dataclass(frozen=True)
class SymmetrizationCheck:
    expected_excess: float
    offset_bound: float

    @property
    def holds(self) -> bool:
        return self.expected_excess <= self.offset_bound


def symmetrization_check(loss, dist, n: int, domain: Ball, per_axis: int = 401,
                         tol: float = 1e-10) -> SymmetrizationCheck:
    """Exact ``E[F(w_hat) - F(w*)]`` against ``4 E E_eps sup`` of the offset process.

    Expectations over data enumerate all samples of size ``n`` from the
    finite-support distribution; the supremum runs over a grid of W plus
    ``w*``.
    """
    from .solver import excess_risk, minimize_empirical, minimize_population

    w_star = minimize_population(loss, dist, domain, tol).w_hat
    grid = np.vstack([ball_grid(domain, per_axis), w_star])
    lhs = 0.0
    rhs = 0.0
    for counts in sample_multisets(n, dist.size):
        prob = multinomial_probability(counts, dist.probabilities)
        keep = counts > 0
        obj = EmpiricalObjective(loss, dist.x[keep], dist.y[keep], counts[keep], validate=False)
        w_hat = minimize_empirical(obj, domain, tol).w_hat
        lhs += prob * excess_risk(loss, dist, w_hat, w_star)
        inst = OffsetProcessInstance(obj, w_star, grid)
        rhs += prob * 4.0 * float(enumerate_suprema(inst).mean())
    return SymmetrizationCheck(lhs, rhs)
