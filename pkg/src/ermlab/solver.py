"""Projected gradient descent for ERM and for exact population minimizers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NotConverged
from .geometry import Ball, project_to_ball
from .losses import LossModel, WeightedObjective

ARMIJO = 1e-4
BACKTRACK = 0.5
POWER_ITERS = 20
# target optimization error relative to the statistical scale L^2 d / (sigma n)
OPT_ERROR_FRACTION = 1e-4


@dataclass(frozen=True)
class ErmResult:
    w_hat: np.ndarray
    objective: float
    gradient_map_norm: float
    iterations: int
    converged: bool
    tol: float
    # F(w) - min F <= gradient_map_norm * diam(W) for convex F on a ball
    certified_gap: float = field(default=math.inf)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support law of ``Z = (x, y)``: atoms as rows with probabilities."""

    x: np.ndarray
    y: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.array(self.x, dtype=float))
        y = np.array(self.y, dtype=float).reshape(-1)
        p = np.array(self.probabilities, dtype=float).reshape(-1)
        if not (x.shape[0] == y.shape[0] == p.shape[0]):
            raise DimMismatch("atoms and probabilities differ in length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must lie on the simplex")
        for name, arr in (("x", x), ("y", y), ("probabilities", p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def size(self) -> int:
        return self.x.shape[0]

    def objective(self, loss: LossModel) -> WeightedObjective:
        return WeightedObjective(loss, self.x, self.y, self.probabilities)

    def second_moment(self) -> np.ndarray:
        return (self.x * self.probabilities[:, None]).T @ self.x


def _smoothness_estimate(obj: WeightedObjective, w: np.ndarray, rng_seed: int = 0) -> float:
    """Power iteration on finite-difference Hessian-vector products at ``w``."""
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal(obj.dim)
    v /= np.linalg.norm(v)
    g0 = obj.gradient(w)
    est = 0.0
    t = 1e-4 * max(1.0, float(np.linalg.norm(w)))
    for _ in range(POWER_ITERS):
        hv = (obj.gradient(w + t * v) - g0) / t
        nrm = float(np.linalg.norm(hv))
        if nrm == 0.0:
            break
        est = nrm
        v = hv / nrm
    return est


def _pgd(obj: WeightedObjective, domain: Ball, tol: float, max_iters: int, w0=None,
         trace: list | None = None) -> ErmResult:
    w = domain.center.copy() if w0 is None else project_to_ball(domain, w0)
    value, grad = obj.value_and_gradient(w)
    if trace is not None:
        trace.append(value)
    smooth = _smoothness_estimate(obj, w)
    step = 1.0 / smooth if smooth > 0 else 1.0
    diam = 2.0 * domain.radius
    gmap = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        s = step
        while True:
            w_new = project_to_ball(domain, w - s * grad)
            new_value = obj.value(w_new)
            if new_value <= value + ARMIJO * float(grad @ (w_new - w)) or s < 1e-20:
                break
            s *= BACKTRACK
        gmap = float(np.linalg.norm(w - w_new)) / s
        # a smaller step found by backtracking becomes the next trial step
        step = s
        if new_value <= value:
            w, value = w_new, new_value
            grad = obj.gradient(w)
            if trace is not None:
                trace.append(value)
        if gmap <= tol:
            break
    # report the gradient mapping at the returned point with the final step
    w_chk = project_to_ball(domain, w - step * grad)
    gmap = float(np.linalg.norm(w - w_chk)) / step
    converged = gmap <= tol
    return ErmResult(w, value, gmap, it, converged, tol, gmap * diam)


def minimize_empirical(obj: WeightedObjective, domain: Ball, tol: float = 1e-8,
                       max_iters: int = 100_000, raise_on_failure: bool = True,
                       trace: list | None = None) -> ErmResult:
    """ERM over the ball by projected gradient descent with Armijo backtracking.

    Starts from the ball centre, so along flat (kernel) directions of the
    objective the returned point keeps the centre's coordinates.  Accepted
    objective values are appended to ``trace`` when a list is given.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if obj.dim != domain.dim:
        raise DimMismatch("objective and domain dimensions differ")
    res = _pgd(obj, domain, tol, max_iters, trace=trace)
    if not res.converged and raise_on_failure:
        raise NotConverged(
            f"gradient mapping {res.gradient_map_norm:.3e} > tol {tol:.3e} "
            f"after {res.iterations} iterations", res)
    return res


def minimize_population(loss: LossModel, dist: DiscreteDistribution, domain: Ball,
                        tol: float = 1e-8, max_iters: int = 200_000) -> ErmResult:
    """Exact population minimizer; runs 10x tighter than the requested ``tol``."""
    return minimize_empirical(dist.objective(loss), domain, tol / 10.0, max_iters)


def excess_risk(loss: LossModel, dist: DiscreteDistribution, w, w_star,
                clip: bool = True) -> float:
    obj = dist.objective(loss)
    diff = float((obj.per_atom(np.asarray(w)) - obj.per_atom(np.asarray(w_star))) @ obj.weights)
    if clip and -1e-12 <= diff < 0:
        return 0.0
    return diff


def tolerance_for(loss: LossModel, d: int, n: int) -> float:
    """Gradient-mapping tolerance keeping certified optimization error tiny.

    The certified gap is ``tol * diam(W)``; it is held below
    ``OPT_ERROR_FRACTION * L^2 d / (sigma n)``.
    """
    scale = loss.lipschitz**2 * d / (loss.sigma * n)
    return OPT_ERROR_FRACTION * scale / (2.0 * loss.domain_radius)
