"""3-D primitives shared by the whole pipeline.

Points are plain ``float64`` numpy arrays: a single point has shape ``(3,)``,
a cloud ``(N, 3)``.  Lengths are in meters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateNeighborhood

NORMAL_NEIGHBORS = 6

# covariance eigenvalue ratio below which a neighbourhood counts as rank < 2
_RANK_TOL = 1e-12


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {arr.shape}")
    return arr


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalise a zero vector")
    return v / n


@dataclass(frozen=True)
class RigidTransform:
    """``p -> rotation @ p + translation`` with a proper rotation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def about_z(cls, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def apply_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def apply_transform(t: RigidTransform, p) -> np.ndarray:
    return t.apply(p)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def k_nearest(cloud, query, k: int) -> np.ndarray:
    """Indices of the ``min(k, len(cloud))`` points closest to ``query``.

    Sorted by ascending Euclidean distance, ties broken by ascending index.
    """
    pts = as_points(cloud)
    if pts.shape[0] == 0:
        raise ValueError("cloud must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    diff = pts - q
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    return np.argsort(d2, kind="stable")[: min(k, pts.shape[0])]


def _smallest_eigvec(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(cov)
    return w, v[..., :, 0]


def estimate_normal(points, query=None) -> np.ndarray:
    """Unit normal of the least-squares plane through a neighbourhood.

    The sign is arbitrary; callers orient it.  ``query`` is accepted for
    interface symmetry and does not enter the fit.
    """
    pts = as_points(points)
    if pts.shape[0] < 3:
        raise DegenerateNeighborhood("need at least 3 points for a plane fit")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    w, n = _smallest_eigvec(cov)
    if w[2] <= 0.0 or w[1] <= _RANK_TOL * w[2]:
        raise DegenerateNeighborhood("neighbourhood is collinear or coincident")
    return n / np.linalg.norm(n)


def estimate_normals(points, k: int = NORMAL_NEIGHBORS) -> np.ndarray:
    """Plane-fit normal at every point from itself plus its ``k`` nearest neighbours.

    Returns an ``(N, 3)`` array of unit vectors with arbitrary sign.
    """
    pts = as_points(points)
    if pts.shape[0] < k + 1:
        raise DegenerateNeighborhood(f"need at least {k + 1} points, got {pts.shape[0]}")
    idx = kernels.knn_all(pts, k + 1)
    nb = pts[idx]                                    # (N, k+1, 3)
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    w, normals = _smallest_eigvec(cov)
    bad = (w[:, 2] <= 0.0) | (w[:, 1] <= _RANK_TOL * w[:, 2])
    if bad.any():
        raise DegenerateNeighborhood(f"{int(bad.sum())} degenerate neighbourhoods")
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)
