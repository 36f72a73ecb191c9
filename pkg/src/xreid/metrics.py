"""Feasibility metrics, the EMD baseline and CMC ranking."""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import EmptyInput, QueryIdentityMissing, SizeLimitExceeded

for _backend in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

EMD_MAX_POINTS = 128
EMD_MAX_OFFSET = 5
CCDF_GRID = np.linspace(0.0, 1.0, 101)


class EmptyRadarFrameWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# intersection ratio
# ---------------------------------------------------------------------------

@dataclass
class IntersectionResult:
    per_frame_ratio: list
    per_part_ratio: dict = field(default_factory=dict)
    empty_radar_frames: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_frame_ratio)) if self.per_frame_ratio else float("nan")


def _nearest(radar_xyz, sig_xyz):
    tree = cKDTree(sig_xyz)
    return tree.query(radar_xyz, k=1)


def intersection_ratio(radar_xyz, sig_xyz, delta: float) -> float:
    """Fraction of radar points whose nearest signature point is within ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    r = np.asarray(radar_xyz, dtype=np.float64).reshape(-1, 3)
    s = np.asarray(sig_xyz, dtype=np.float64).reshape(-1, 3)
    if r.shape[0] == 0:
        warnings.warn("empty radar frame; ratio taken as 1", EmptyRadarFrameWarning, stacklevel=2)
        return 1.0
    if s.shape[0] == 0:
        return 0.0
    dist, _ = _nearest(r, s)
    return float(np.mean(dist <= delta))


def intersection_study(radar_frames, sig_frames, delta: float) -> IntersectionResult:
    """Per-frame ratios plus the share of hits attributed to each body part.

    A hit is credited to the part label of the nearest signature point; the
    per-part ratio is hits on that part over all radar points near any
    signature point of that part's frames.
    """
    ratios = []
    hits = np.zeros(6)
    totals = np.zeros(6)
    empties = 0
    for rf, sf in zip(radar_frames, sig_frames):
        r = np.asarray(getattr(rf, "points", rf))[:, :3]
        if r.shape[0] == 0:
            empties += 1
            ratios.append(1.0)
            continue
        if sf.points.shape[0] == 0:
            ratios.append(0.0)
            continue
        dist, idx = _nearest(r, sf.points)
        inside = dist <= delta
        ratios.append(float(inside.mean()))
        part = np.asarray(sf.parts)[idx]
        np.add.at(totals, part, 1)
        np.add.at(hits, part[inside], 1)
    if empties:
        warnings.warn(f"{empties} empty radar frame(s); ratio taken as 1", EmptyRadarFrameWarning, stacklevel=2)
    per_part = {int(p): float(hits[p] / totals[p]) for p in range(6) if totals[p] > 0}
    return IntersectionResult(ratios, per_part, empties)


def ccdf(values, grid=CCDF_GRID) -> np.ndarray:
    """Fraction of ``values`` at or above each grid threshold."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise EmptyInput("ccdf needs at least one value")
    return (v.size - np.searchsorted(v, grid, side="left")) / v.size


# ---------------------------------------------------------------------------
# earth mover's distance
# ---------------------------------------------------------------------------

def emd(a, b, wa=None, wb=None) -> float:
    """Exact optimal-transport cost with Euclidean ground distance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptyInput("emd needs non-empty point sets")
    a = a.reshape(a.shape[0], -1) if a.ndim else a.reshape(1, -1)
    b = b.reshape(b.shape[0], -1) if b.ndim else b.reshape(1, -1)
    if a.shape[0] > EMD_MAX_POINTS or b.shape[0] > EMD_MAX_POINTS:
        raise SizeLimitExceeded(f"emd is limited to {EMD_MAX_POINTS} points per side")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    uniform = wa is None and wb is None
    if uniform and a.shape[0] == b.shape[0]:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / a.shape[0])
    wa = np.full(a.shape[0], 1.0 / a.shape[0]) if wa is None else np.asarray(wa, dtype=np.float64)
    wb = np.full(b.shape[0], 1.0 / b.shape[0]) if wb is None else np.asarray(wb, dtype=np.float64)
    wa = wa / wa.sum()
    wb = wb / wb.sum()
    return float(max(ot.emd2(wa, wb, cost), 0.0))


def _subsample(points, limit):
    if points.shape[0] <= limit:
        return points
    order = np.lexsort(points.T[::-1])
    pick = np.unique(np.round(np.linspace(0, points.shape[0] - 1, limit)).astype(np.int64))
    return points[order][pick]


def emd_similarity(radar_seq, sig_seq, max_offset: int = EMD_MAX_OFFSET) -> float:
    """Negative mean per-frame EMD at the best integer frame offset.

    Frame pairs where either side is empty are skipped; offsets with no
    usable pair are ignored, and ``-inf`` is returned if none remain.
    """
    radar = [np.asarray(getattr(f, "points", f))[:, :3] for f in radar_seq]
    sig = [_subsample(np.asarray(getattr(f, "points", f))[:, :3], EMD_MAX_POINTS) for f in sig_seq]
    if not radar or not sig:
        raise EmptyInput("emd_similarity needs non-empty sequences")
    cache = {}
    best = np.inf
    for off in range(-max_offset, max_offset + 1):
        costs = []
        for i, r in enumerate(radar):
            j = i + off
            if 0 <= j < len(sig) and r.shape[0] and sig[j].shape[0]:
                if (i, j) not in cache:
                    cache[(i, j)] = emd(r, sig[j])
                costs.append(cache[(i, j)])
        if costs:
            best = min(best, float(np.mean(costs)))
    return 0.0 - best


# ---------------------------------------------------------------------------
# CMC
# ---------------------------------------------------------------------------

@dataclass
class GalleryEntry:
    identity: int
    sequence: list
    embedding: np.ndarray | None = None


@dataclass
class CMCResult:
    top_k_accuracy: dict
    ranks: list = field(default_factory=list)

    def top(self, k: int) -> float:
        ks = sorted(self.top_k_accuracy)
        return self.top_k_accuracy[min(k, ks[-1])]


def rank_gallery(scores: np.ndarray) -> np.ndarray:
    """Gallery indices by descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def identity_rank(scores, gallery_ids, identity) -> int:
    """1-based position of the best-placed gallery entry of ``identity``."""
    ranked_ids = np.asarray(gallery_ids)[rank_gallery(scores)]
    hits = np.flatnonzero(ranked_ids == identity)
    if hits.size == 0:
        raise QueryIdentityMissing(f"identity {identity} not in gallery")
    return int(hits[0]) + 1


def cmc_from_scores(score_matrix, query_ids, gallery_ids) -> CMCResult:
    """CMC from a (queries x gallery) similarity matrix."""
    score_matrix = np.asarray(score_matrix, dtype=np.float64)
    gallery_ids = np.asarray(gallery_ids)
    query_ids = np.asarray(query_ids)
    if query_ids.size == 0:
        raise EmptyInput("no queries")
    missing = set(query_ids.tolist()) - set(gallery_ids.tolist())
    if missing:
        raise QueryIdentityMissing(f"query identities absent from gallery: {sorted(missing)}")
    ranks = [identity_rank(score_matrix[q], gallery_ids, query_ids[q]) for q in range(query_ids.size)]
    r = np.asarray(ranks)
    top = {k: float(np.mean(r <= k)) for k in range(1, gallery_ids.size + 1)}
    return CMCResult(top, ranks)


def cmc(queries: Sequence, gallery: Sequence[GalleryEntry], scorer: Callable) -> CMCResult:
    """Rank the gallery for each ``(sequence, identity)`` query with ``scorer(query_seq, entry)``."""
    gallery_ids = [g.identity for g in gallery]
    missing = {q[1] for q in queries} - set(gallery_ids)
    if missing:
        raise QueryIdentityMissing(f"query identities absent from gallery: {sorted(missing)}")
    scores = np.array([[scorer(q[0], g) for g in gallery] for q in queries])
    return cmc_from_scores(scores, [q[1] for q in queries], gallery_ids)
