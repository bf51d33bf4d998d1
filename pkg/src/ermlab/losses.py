"""Losses satisfying the strong-convexity / empirical-Lipschitz condition.

Both built-in losses are generalized linear models ``f(w, z) = l(w^T x, y)``
whose data-dependent matrix is the sample second-moment matrix
``H = (1/n) sum_i x_i x_i^T``.  Samples are stored column-wise as arrays
``x`` (n, d) and ``y`` (n,); :class:`Datum` exists for validated single
points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DimMismatch, InvalidDatum, NonPositiveRadius
from .seminorm import PsdSeminorm, build_seminorm, weighted_covariance

# slack for radius checks on data generated by floating-point rescaling
_RADIUS_SLACK = 1e-12


@dataclass(frozen=True)
class LossModel:
    """A margin loss with certified constants.

    ``sigma`` is the strong-convexity modulus with respect to ``||.||_H`` and
    ``lipschitz`` the empirical Lipschitz constant.  ``domain_radius`` is the
    radius of the reference ball W centred at the origin, ``feature_radius``
    bounds ``||x||`` and ``label_bound`` bounds ``|y|``.
    """

    name: str
    sigma: float
    lipschitz: float
    domain_radius: float
    feature_radius: float
    label_bound: float
    binary_labels: bool
    link: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    link_derivative: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    dim: int | None = None

    @property
    def prop2_bound(self) -> float:
        """Uniform bound ``4 L^2 / sigma`` on ``|f(w, z) - f(w*, z)|``."""
        return 4.0 * self.lipschitz**2 / self.sigma

    def values(self, w, x, y) -> np.ndarray:
        """Per-sample losses.

        ``w`` may be a single vector (result shape ``(n,)``) or a batch of
        row vectors of shape ``(g, d)`` (result shape ``(g, n)``).
        """
        margins = np.asarray(w, dtype=float) @ np.asarray(x, dtype=float).T
        return self.link(margins, np.asarray(y, dtype=float))

    def evaluate(self, w, z: "Datum") -> float:
        return float(self.link(np.dot(w, z.features), np.float64(z.label)))

    def gradient(self, w, z: "Datum") -> np.ndarray:
        m = np.dot(w, z.features)
        return self.link_derivative(m, np.float64(z.label)) * z.features

    def build_h(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x.T @ x / x.shape[0]

    def datum(self, features, label) -> "Datum":
        return Datum.checked(features, label, self)

    def check_sample(self, x, y) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        if self.dim is not None and x.shape[1] != self.dim:
            raise DimMismatch(f"{self.name} loss expects d={self.dim}")
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms > self.feature_radius * (1 + _RADIUS_SLACK)):
            raise InvalidDatum(f"feature norm exceeds {self.feature_radius}")
        if self.binary_labels:
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise InvalidDatum("labels must be -1 or +1")
        elif np.any(np.abs(y) > self.label_bound * (1 + _RADIUS_SLACK)):
            raise InvalidDatum(f"|label| exceeds {self.label_bound}")


@dataclass(frozen=True)
class Datum:
    features: np.ndarray
    label: float

    @classmethod
    def checked(cls, features, label, loss: LossModel) -> "Datum":
        x = np.array(features, dtype=float).reshape(-1)
        loss.check_sample(x[None, :], np.array([label], dtype=float))
        x.setflags(write=False)
        return cls(x, float(label))


def _squared_link(m, y):
    return (y - m) ** 2


def _squared_link_derivative(m, y):
    return -2.0 * (y - m)


def _logistic_link(m, y):
    return np.logaddexp(0.0, -y * m)


def _logistic_link_derivative(m, y):
    # d/dm log(1 + exp(-y m)) = -y * sigmoid(-y m)
    return -y * np.exp(-np.logaddexp(0.0, y * m))


def make_squared_loss(radius_r: float, dim: int | None = None) -> LossModel:
    """Squared loss ``(y - w^T x)^2`` with ``||x|| <= 1``, ``|y| <= R``, ``||w|| <= R``.

    Constants: ``sigma = 2`` and ``L = 4 R``.
    """
    if not radius_r > 0:
        raise NonPositiveRadius(f"R must be positive, got {radius_r}")
    return LossModel(
        name="squared",
        sigma=2.0,
        lipschitz=4.0 * radius_r,
        domain_radius=float(radius_r),
        feature_radius=1.0,
        label_bound=float(radius_r),
        binary_labels=False,
        link=_squared_link,
        link_derivative=_squared_link_derivative,
        dim=dim,
    )


def make_logistic_loss(ball_b: float, feature_r: float, dim: int | None = None) -> LossModel:
    """Logistic loss ``log(1 + exp(-y w^T x))`` on ``||w|| <= B`` with ``||x|| <= R``.

    Constants: ``sigma = exp(-B R)`` and ``L = 1``.
    """
    if not (ball_b > 0 and feature_r > 0):
        raise NonPositiveRadius(f"B and R must be positive, got {ball_b}, {feature_r}")
    return LossModel(
        name="logistic",
        sigma=math.exp(-ball_b * feature_r),
        lipschitz=1.0,
        domain_radius=float(ball_b),
        feature_radius=float(feature_r),
        label_bound=1.0,
        binary_labels=True,
        link=_logistic_link,
        link_derivative=_logistic_link_derivative,
        dim=dim,
    )


def make_loss(kind: str, radius_r: float = 1.0, ball_b: float = 1.0, dim=None) -> LossModel:
    if kind == "squared":
        return make_squared_loss(radius_r, dim=dim)
    if kind == "logistic":
        return make_logistic_loss(ball_b, radius_r, dim=dim)
    raise ValueError(f"unknown loss kind {kind!r}")


class WeightedObjective:
    """``sum_j p_j f(w, z_j)`` over finitely many atoms ``z_j``.

    Used both for population risk under a finite-support distribution and for
    empirical risk, where ``p_j`` are the sample frequencies.
    """

    def __init__(self, loss: LossModel, x, y, weights):
        x = np.atleast_2d(np.array(x, dtype=float))
        y = np.array(y, dtype=float).reshape(-1)
        weights = np.array(weights, dtype=float).reshape(-1)
        if not (x.shape[0] == y.shape[0] == weights.shape[0]):
            raise DimMismatch("x, y and weights must have the same length")
        for arr in (x, y, weights):
            arr.setflags(write=False)
        self.loss = loss
        self.x = x
        self.y = y
        self.weights = weights

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def _check_w(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.dim:
            raise DimMismatch(f"expected w of length {self.dim}, got {w.shape}")
        return w

    def per_atom(self, w) -> np.ndarray:
        return self.loss.values(self._check_w(w), self.x, self.y)

    def value(self, w) -> float:
        return float(self.per_atom(w) @ self.weights)

    def values(self, ws) -> np.ndarray:
        """Objective at each row of ``ws``."""
        return self.per_atom(np.atleast_2d(ws)) @ self.weights

    def gradient(self, w) -> np.ndarray:
        w = self._check_w(w)
        m = self.x @ w
        return (self.weights * self.loss.link_derivative(m, self.y)) @ self.x

    def value_and_gradient(self, w):
        w = self._check_w(w)
        m = self.x @ w
        v = float(self.loss.link(m, self.y) @ self.weights)
        g = (self.weights * self.loss.link_derivative(m, self.y)) @ self.x
        return v, g


class EmpiricalObjective(WeightedObjective):
    """Sample-average objective ``(1/n) sum_i f(w, Z_i)`` with its seminorm.

    The sample may be given explicitly (``counts=None``) or compressed as
    distinct points with multiplicities, which gives the same objective and
    the same ``H`` at a cost independent of ``n``.
    """

    def __init__(self, loss: LossModel, x, y, counts=None, validate: bool = True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if counts is None:
            counts = np.ones(x.shape[0])
        counts = np.asarray(counts, dtype=float)
        n = counts.sum()
        if n < 1:
            raise ValueError("a sample needs at least one point")
        if validate:
            loss.check_sample(x, y)
        super().__init__(loss, x, y, counts / n)
        self.counts = counts
        self.n = int(round(n))

    @cached_property
    def h(self) -> PsdSeminorm:
        return build_seminorm(weighted_covariance(self.x, self.weights))

    @classmethod
    def from_data(cls, loss: LossModel, data: list[Datum]) -> "EmpiricalObjective":
        x = np.array([z.features for z in data])
        y = np.array([z.label for z in data])
        return cls(loss, x, y)

    def expanded(self):
        """The sample as explicit ``(x, y)`` arrays with repeated rows."""
        reps = self.counts.astype(int)
        return np.repeat(self.x, reps, axis=0), np.repeat(self.y, reps)


def empirical_risk(obj: EmpiricalObjective, w) -> float:
    return obj.value(w)
