"""Numerical certification of the loss-class assumptions on a given sample.

Four checks are run on random segments of the reference ball W:

* ``strong_convexity`` -- ``F(a u + (1-a) v) <= a F(u) + (1-a) F(v) - sigma a (1-a) ||u-v||_H^2 / 2``
* ``lipschitz`` -- ``P_n (f(u, Z) - f(v, Z))^2 <= L^2 ||u - v||_H^2``
* ``boundedness`` -- ``|f(w, Z_i) - f(w*, Z_i)| <= 4 L^2 / sigma``
* ``exp_concavity`` -- midpoint concavity of ``exp(-sigma F / L^2)``

Violations are reported, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Ball, sample_ball
from .losses import EmpiricalObjective

GAP_TOL = 1e-9
EXP_CONCAVITY_TOL = 1e-10
CHECKS = ("strong_convexity", "lipschitz", "boundedness", "exp_concavity")


@dataclass(frozen=True)
class CertificationReport:
    loss: str
    n: int
    dim: int
    trials: int
    strong_convexity_gap: float
    lipschitz_gap: float
    boundedness_max: float
    boundedness_bound: float
    exp_concavity_gap: float

    @property
    def strong_convexity_ok(self) -> bool:
        return self.strong_convexity_gap <= GAP_TOL

    @property
    def lipschitz_ok(self) -> bool:
        return self.lipschitz_gap <= GAP_TOL

    @property
    def boundedness_ok(self) -> bool:
        return self.boundedness_max <= self.boundedness_bound + GAP_TOL

    @property
    def exp_concavity_ok(self) -> bool:
        return self.exp_concavity_gap <= EXP_CONCAVITY_TOL

    @property
    def passed(self) -> bool:
        return all(self.flags().values())

    def flags(self) -> dict[str, bool]:
        return {
            "strong_convexity": self.strong_convexity_ok,
            "lipschitz": self.lipschitz_ok,
            "boundedness": self.boundedness_ok,
            "exp_concavity": self.exp_concavity_ok,
        }

    def rows(self):
        """CSV rows ``(loss, d, n, trials, check, worst_value, limit, pass)``."""
        values = {
            "strong_convexity": (self.strong_convexity_gap, GAP_TOL),
            "lipschitz": (self.lipschitz_gap, GAP_TOL),
            "boundedness": (self.boundedness_max, self.boundedness_bound + GAP_TOL),
            "exp_concavity": (self.exp_concavity_gap, EXP_CONCAVITY_TOL),
        }
        flags = self.flags()
        for name in CHECKS:
            worst, limit = values[name]
            yield (self.loss, self.dim, self.n, self.trials, name, worst, limit, flags[name])


def segment_gaps(obj: EmpiricalObjective, u, v, alpha, w_star):
    """Per-triple gaps for the four checks.

    Returns ``(strong_convexity, lipschitz, boundedness, exp_concavity)``
    arrays; the first, second and fourth must be nonpositive, the third is
    the largest ``|f(w, Z_i) - f(w*, Z_i)|`` over ``w in {u, v}``.
    """
    u = np.atleast_2d(u)
    v = np.atleast_2d(v)
    alpha = np.asarray(alpha, dtype=float)
    sigma, lip = obj.loss.sigma, obj.loss.lipschitz
    fu = obj.per_atom(u)
    fv = obj.per_atom(v)
    Fu = fu @ obj.weights
    Fv = fv @ obj.weights
    a = alpha[:, None]
    # written relative to v so that u == v gives gaps of exactly zero
    Fmix = obj.values(v + a * (u - v))
    dist2 = obj.h.quad(u - v)
    sc_gap = (Fmix - Fv) - alpha * (Fu - Fv) + 0.5 * sigma * alpha * (1 - alpha) * dist2
    lip_gap = ((fu - fv) ** 2) @ obj.weights - lip**2 * dist2
    f_star = obj.per_atom(np.asarray(w_star, dtype=float))
    bounded = np.maximum(np.abs(fu - f_star).max(axis=1), np.abs(fv - f_star).max(axis=1))
    eta = sigma / lip**2
    Fmid = obj.values(0.5 * (u + v))
    ec_gap = 0.5 * (np.exp(-eta * Fu) + np.exp(-eta * Fv)) - np.exp(-eta * Fmid)
    return sc_gap, lip_gap, bounded, ec_gap


def certify_assumption1(obj: EmpiricalObjective, trials: int, rng_seed: int,
                        w_star=None, domain: Ball | None = None) -> CertificationReport:
    """Worst-case violations of the four checks over ``trials`` random triples.

    ``w_star`` should be the population minimizer; when omitted the sample's
    ERM is used, which the boundedness property covers equally (it holds for
    any pair of points of W).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    loss = obj.loss
    d = obj.dim
    if domain is None:
        domain = Ball.centered(d, loss.domain_radius)
    if w_star is None:
        from .solver import minimize_empirical
        w_star = minimize_empirical(obj, domain, tol=1e-10).w_hat
    rng = np.random.default_rng(rng_seed)
    u = sample_ball(rng, d, domain.radius, trials, domain.center)
    v = sample_ball(rng, d, domain.radius, trials, domain.center)
    alpha = rng.random(trials)
    sc_gap, lip_gap, bounded, ec_gap = segment_gaps(obj, u, v, alpha, w_star)
    return CertificationReport(
        loss=loss.name,
        n=obj.n,
        dim=d,
        trials=trials,
        strong_convexity_gap=float(sc_gap.max()),
        lipschitz_gap=float(lip_gap.max()),
        boundedness_max=float(bounded.max()),
        boundedness_bound=loss.prop2_bound,
        exp_concavity_gap=float(ec_gap.max()),
    )
