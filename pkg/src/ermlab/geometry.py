"""Reference ball W, seminorm annuli around ``w*`` and covering nets.

The covering construction follows the pseudo-inverse transfer argument: a
Euclidean ``u``-net ``{a_j}`` of ``B(0, r)`` is mapped to
``{w* + (H^+)^{1/2} a_j}``, which is a ``u``-net of
``W[0, r] = {w in W : ||w - w*||_H <= r}`` in the seminorm, because
``||w - w_j||_H = ||Pi a - Pi a_j|| <= ||a - a_j||`` for
``a = H^{1/2} (w - w*)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NonPositiveRadius, ScaleOutOfRange
from .seminorm import PsdSeminorm, pushforward_root

MEMBERSHIP_SLACK = 1e-12


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise NonPositiveRadius(f"ball radius must be positive, got {self.radius}")

    @classmethod
    def centered(cls, dim: int, radius: float) -> "Ball":
        return cls(np.zeros(dim), radius)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, w, slack: float = 1e-12) -> np.ndarray | bool:
        w = np.asarray(w, dtype=float)
        return np.linalg.norm(w - self.center, axis=-1) <= self.radius * (1 + slack)


@dataclass(frozen=True)
class Annulus:
    """``W[a, b] = {w in W : a <= ||w - w*||_H <= b}``."""

    base: Ball
    center_point: np.ndarray
    seminorm: PsdSeminorm
    inner: float
    outer: float

    def __post_init__(self):
        if self.inner < 0 or self.outer < self.inner:
            raise ValueError(f"need 0 <= inner <= outer, got [{self.inner}, {self.outer}]")
        c = np.array(self.center_point, dtype=float).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "center_point", c)

    def contains(self, w) -> np.ndarray | bool:
        w = np.asarray(w, dtype=float)
        dist = self.seminorm.norm(w - self.center_point)
        inside = (dist >= self.inner - MEMBERSHIP_SLACK) & (dist <= self.outer + MEMBERSHIP_SLACK)
        return self.base.contains(w) & inside


@dataclass(frozen=True)
class SeminormNet:
    points: np.ndarray
    scale: float
    radius: float
    preimage: np.ndarray

    @property
    def certificate(self) -> float:
        """Cardinality bound ``(6 r / u)^d``."""
        return (6.0 * self.radius / self.scale) ** self.points.shape[1]

    @property
    def packing_bound(self) -> float:
        return (1.0 + 2.0 * self.radius / self.scale) ** self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def project_to_ball(b: Ball, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != b.dim:
        raise DimMismatch(f"expected length {b.dim}, got {w.shape}")
    diff = w - b.center
    dist = np.linalg.norm(diff, axis=-1, keepdims=True)
    factor = np.where(dist > b.radius, b.radius / np.where(dist > 0, dist, 1.0), 1.0)
    return b.center + diff * factor


def sample_ball(rng: np.random.Generator, dim: int, radius: float, size: int, center=None):
    """Uniform samples from a Euclidean ball, one per row."""
    g = rng.standard_normal((size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(size) ** (1.0 / dim)
    pts = g * r[:, None]
    if center is not None:
        pts += center
    return pts


def sample_annulus(ann: Annulus, rng: np.random.Generator, size: int, max_rounds: int = 1000):
    """Rejection sampling of ``W[a, b]`` from the ambient ball.

    May return fewer than ``size`` points when the annulus is a tiny fraction
    of the ball.
    """
    kept = []
    count = 0
    batch = max(size, 1024)
    for _ in range(max_rounds):
        pts = sample_ball(rng, ann.base.dim, ann.base.radius, batch, ann.base.center)
        pts = pts[ann.contains(pts)]
        kept.append(pts)
        count += pts.shape[0]
        if count >= size:
            break
    return np.concatenate(kept)[:size]


def _min_dist(points: np.ndarray, net: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty(points.shape[0])
    sq_net = np.sum(net * net, axis=1)
    for start in range(0, points.shape[0], chunk):
        p = points[start:start + chunk]
        sq = np.sum(p * p, axis=1)[:, None] - 2.0 * p @ net.T + sq_net[None, :]
        out[start:start + chunk] = np.sqrt(np.maximum(sq.min(axis=1), 0.0))
    return out


class _Packing:
    """Growing point set with pairwise distances above ``scale``."""

    def __init__(self, dim: int, scale: float):
        self.scale = scale
        self._buf = np.zeros((64, dim))
        self.size = 1  # the origin

    @property
    def points(self) -> np.ndarray:
        return self._buf[:self.size]

    def insert(self, candidates: np.ndarray) -> int:
        """Append candidates farther than ``scale`` from all kept points."""
        added = 0
        for c in candidates:
            d2 = np.sum((self.points - c) ** 2, axis=1)
            if d2.min() <= self.scale**2:
                continue
            if self.size == self._buf.shape[0]:
                self._buf = np.concatenate([self._buf, np.zeros_like(self._buf)])
            self._buf[self.size] = c
            self.size += 1
            added += 1
        return added


def _hole_search(net: np.ndarray, radius: float, scale: float, rng, starts: int,
                 steps: int = 60) -> np.ndarray:
    """Local ascent of the distance-to-net function from random starts.

    Returns the end points whose distance to the net exceeds ``scale``.
    Uncovered regions of a near-maximal packing are basins of this ascent,
    so this finds holes that uniform proposals hit only rarely.
    """
    dim = net.shape[1]
    x = sample_ball(rng, dim, radius, starts)
    step = 0.5 * scale
    ball = Ball.centered(dim, radius)
    sq_net = np.sum(net * net, axis=1)
    for _ in range(steps):
        sq = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ net.T + sq_net[None, :]
        away = x - net[np.argmin(sq, axis=1)]
        nrm = np.linalg.norm(away, axis=1, keepdims=True)
        nrm[nrm == 0] = 1.0
        x = project_to_ball(ball, x + step * away / nrm)
        step *= 0.9
    return x[_min_dist(x, net) > scale]


def build_euclidean_net(dim: int, radius: float, scale: float, rng_seed: int,
                        max_stall: int | None = None) -> np.ndarray:
    """Maximal ``scale``-separated subset of ``B(0, radius)``, built greedily.

    Pairwise distances exceed ``scale``, so the size never exceeds
    ``(1 + 2 radius / scale)^dim``; maximality makes the set a
    ``scale``-cover of the ball.  The origin is always the first point.
    """
    if not (0 < scale <= radius):
        raise ScaleOutOfRange(f"need 0 < u <= r, got u={scale}, r={radius}")
    rng = np.random.default_rng(rng_seed)
    if max_stall is None:
        max_stall = 200 * dim
    net = _Packing(dim, scale)
    # random greedy phase: stop after max_stall consecutive rejections
    stall = 0
    while stall < max_stall:
        batch = sample_ball(rng, dim, radius, 256)
        far = _min_dist(batch, net.points) > scale
        for c, is_far in zip(batch, far):
            if is_far and net.insert(c[None, :]):
                stall = 0
            else:
                stall += 1
            if stall >= max_stall:
                break
    # hole-filling phase: repeat until an ascent round finds nothing
    while True:
        holes = _hole_search(net.points, radius, scale, rng, 500 * dim)
        if holes.shape[0] == 0 or net.insert(holes) == 0:
            break
    return net.points.copy()


def cover_annulus(ann: Annulus, scale: float, rng_seed: int) -> SeminormNet:
    """Seminorm ``u``-net of ``W[0, r]`` via the pseudo-inverse square root."""
    r = ann.outer
    if not (0 < scale <= r):
        raise ScaleOutOfRange(f"need 0 < u <= r, got u={scale}, r={r}")
    a = build_euclidean_net(ann.base.dim, r, scale, rng_seed)
    points = ann.center_point + pushforward_root(ann.seminorm, a)
    return SeminormNet(points, float(scale), float(r), a)


def annulus_membership(ann: Annulus, w) -> bool:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != ann.base.dim:
        raise DimMismatch(f"expected length {ann.base.dim}, got {w.shape}")
    return bool(ann.contains(w))


def seminorm_cover_distances(net: SeminormNet, h: PsdSeminorm, points) -> np.ndarray:
    """Seminorm distance from each row of ``points`` to its nearest net point."""
    # ||w - p||_H = ||H^{1/2} (w - p)||, so map both sides once
    return _min_dist(np.asarray(points) @ h.sqrt.T, net.points @ h.sqrt.T)


def h_diameter(b: Ball, h: PsdSeminorm) -> float:
    """Diameter of a Euclidean ball in ``||.||_H``: ``2 r sqrt(lambda_max)``."""
    top = max(float(h.eigenvalues[0]), 0.0)
    return 2.0 * b.radius * math.sqrt(top)
