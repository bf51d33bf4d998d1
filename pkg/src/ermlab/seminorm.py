"""Dense symmetric PSD algebra behind the data-dependent seminorm ``||w||_H``.

A :class:`PsdSeminorm` caches the eigendecomposition of ``H`` together with
the derived operators used by the covering construction: the square root
``H^{1/2}``, the pseudo-inverse ``H^+``, its square root ``(H^+)^{1/2}`` and
the orthogonal projector ``Pi`` onto the range of ``H``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, IndefiniteMatrix, NonSymmetric

SYMMETRY_RTOL = 1e-12
NEGATIVE_EIG_RTOL = 1e-10
RANK_RTOL = 1e-10


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    nonincreasing order and eigenvectors stored as columns.
    """
    a = np.array(a, dtype=float, copy=True)
    d = a.shape[0]
    v = np.eye(d)
    if d == 1:
        return a.diagonal().copy(), v
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(d), v
    offdiag = ~np.eye(d, dtype=bool)
    for _ in range(max_sweeps):
        # summed directly: total minus diagonal cancels below sqrt(eps)
        off = np.sqrt(np.sum(a[offdiag] ** 2))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J applied to rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    eigvals = a.diagonal().copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], v[:, order]


@dataclass(frozen=True)
class PsdSeminorm:
    """Seminorm ``||w||_H = sqrt(w^T H w)`` for a symmetric PSD matrix ``H``.

    Instances are immutable; build them with :func:`build_seminorm`.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int
    sqrt: np.ndarray = field(repr=False)
    pinv: np.ndarray = field(repr=False)
    pinv_sqrt: np.ndarray = field(repr=False)
    projector: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.dim:
            raise DimMismatch(f"expected vectors of length {self.dim}, got {w.shape}")
        return w

    def quad(self, w) -> np.ndarray | float:
        """``w^T H w`` clipped at zero; ``w`` may be a batch of row vectors."""
        w = self._check(w)
        q = np.einsum("...i,ij,...j->...", w, self.matrix, w)
        return np.maximum(q, 0.0)

    def norm(self, w):
        return np.sqrt(self.quad(w))

    def kernel_component(self, w) -> np.ndarray:
        w = self._check(w)
        return w - w @ self.projector.T


def build_seminorm(matrix) -> PsdSeminorm:
    h = np.array(matrix, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimMismatch(f"H must be square, got shape {h.shape}")
    scale = max(np.abs(h).max(initial=0.0), 1.0)
    if np.abs(h - h.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise NonSymmetric("matrix is not symmetric within tolerance")
    h = 0.5 * (h + h.T)
    eigvals, eigvecs = jacobi_eigh(h)
    top = eigvals[0] if eigvals.size else 0.0
    if eigvals.size and eigvals[-1] < -NEGATIVE_EIG_RTOL * max(top, 0.0):
        raise IndefiniteMatrix(f"eigenvalue {eigvals[-1]:.3e} below tolerance")
    keep = eigvals > RANK_RTOL * max(top, 1.0)
    rank = int(keep.sum())
    lam = eigvals[keep]
    vk = eigvecs[:, keep]
    sqrt = (vk * np.sqrt(lam)) @ vk.T
    pinv = (vk / lam) @ vk.T
    pinv_sqrt = (vk / np.sqrt(lam)) @ vk.T
    projector = vk @ vk.T
    arrays = [h, eigvals, eigvecs, sqrt, pinv, pinv_sqrt, projector]
    for arr in arrays:
        arr.setflags(write=False)
    return PsdSeminorm(h, eigvals, eigvecs, rank, sqrt, pinv, pinv_sqrt, projector)


def seminorm_of(s: PsdSeminorm, w) -> float:
    return float(s.norm(w))


def pushforward_root(s: PsdSeminorm, a) -> np.ndarray:
    """Map ``a`` through ``(H^+)^{1/2}``; works row-wise on batches.

    ``H^{1/2} (H^+)^{1/2} a`` equals the projection of ``a`` onto range(H).
    """
    a = s._check(a)
    return a @ s.pinv_sqrt.T


def sample_covariance(x) -> np.ndarray:
    """``(1/n) sum_i x_i x_i^T`` for a sample stored as rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x.T @ x / x.shape[0]


def weighted_covariance(x, weights) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    weights = np.asarray(weights, dtype=float)
    return (x * weights[:, None]).T @ x
