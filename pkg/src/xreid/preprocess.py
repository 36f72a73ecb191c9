"""Radar frame cleanup and multi-subject segmentation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NoSubjectsFound
from .radar import RadarFrame

NOISE = kernels.NOISE

Z_MIN, Z_MAX = -1.0, 2.5
DBSCAN_RADIUS = 0.35
DBSCAN_MIN_PTS = 3
TRACK_GATE = 0.5
# clusters of one frame closer than this horizontally are one person
# (a body splits into several clusters at coarse angular resolution, feet a stride apart)
MERGE_RADIUS = 0.45
MIN_TRACK_FRAMES = 3


def height_filter(frame: RadarFrame, z_min: float = Z_MIN, z_max: float = Z_MAX) -> RadarFrame:
    if not z_min < z_max:
        raise ValueError("z_min must be below z_max")
    z = frame.points[:, 2]
    return RadarFrame(frame.timestamp, frame.points[(z >= z_min) & (z <= z_max)])


def dbscan(points, radius: float = DBSCAN_RADIUS, min_pts: int = DBSCAN_MIN_PTS) -> np.ndarray:
    """DBSCAN labels; ``min_pts`` counts the point itself, noise is -1.

    Cluster ids follow the smallest core-point index of each cluster; a
    border point reachable from several clusters takes the lowest id.
    """
    if radius <= 0 or min_pts < 1:
        raise ValueError("radius must be > 0 and min_pts >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return kernels.dbscan_labels(pts, radius, min_pts)


@dataclass
class TrackedSubject:
    frames: list                       # RadarFrame per input frame, possibly empty
    frame_indices: list = field(default_factory=list)   # frames where the subject was seen
    centroid_track: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    @property
    def length(self) -> int:
        return len(self.frame_indices)


def _frame_detections(frame: RadarFrame, z_min, z_max, radius, min_pts):
    kept = height_filter(frame, z_min, z_max).points
    if kept.shape[0] == 0:
        return []
    labels = dbscan(kept[:, :3], radius, min_pts)
    groups = [kept[labels == c] for c in range(labels.max() + 1)]
    # merge vertically stacked clusters of the same body
    merged: list[np.ndarray] = []
    for g in groups:
        c = g[:, :2].mean(axis=0)
        for i, m in enumerate(merged):
            if np.linalg.norm(m[:, :2].mean(axis=0) - c) < MERGE_RADIUS:
                merged[i] = np.vstack([m, g])
                break
        else:
            merged.append(g)
    return merged


def segment_subjects(frames, expected_subjects: int | None = None, *, z_min: float = Z_MIN,
                     z_max: float = Z_MAX, radius: float = DBSCAN_RADIUS,
                     min_pts: int = DBSCAN_MIN_PTS, gate: float = TRACK_GATE) -> list:
    """Split a radar recording into per-person tracks.

    Per frame: height filter, DBSCAN, merge of stacked clusters.  Detections
    are chained across frames by greedy nearest-centroid association in the
    horizontal plane within ``gate``.  Tracks seen in fewer than three
    frames are dropped; with ``expected_subjects`` only the longest tracks
    are kept.  Tracks are returned in order of first appearance.
    """
    tracks: list[dict] = []
    any_points = False
    for t, frame in enumerate(frames):
        dets = _frame_detections(frame, z_min, z_max, radius, min_pts)
        any_points = any_points or bool(dets)
        cents = [d[:, :3].mean(axis=0) for d in dets]
        pairs = []
        for di, c in enumerate(cents):
            for ti, tr in enumerate(tracks):
                dist = float(np.linalg.norm(c[:2] - tr["last"][:2]))
                if dist <= gate:
                    pairs.append((dist, ti, di))
        pairs.sort()
        used_t, used_d = set(), set()
        for _, ti, di in pairs:
            if ti in used_t or di in used_d:
                continue
            used_t.add(ti)
            used_d.add(di)
            tr = tracks[ti]
            tr["hits"][t] = dets[di]
            tr["last"] = cents[di]
        for di in range(len(dets)):
            if di not in used_d:
                tracks.append({"hits": {t: dets[di]}, "last": cents[di], "id": len(tracks)})
    if not any_points:
        raise NoSubjectsFound("every point was filtered out or labelled noise")
    tracks = [tr for tr in tracks if len(tr["hits"]) >= MIN_TRACK_FRAMES]
    if not tracks:
        raise NoSubjectsFound("no track persisted for 3 or more frames")
    if expected_subjects is not None:
        tracks = sorted(tracks, key=lambda tr: (-len(tr["hits"]), tr["id"]))[:expected_subjects]
        tracks.sort(key=lambda tr: tr["id"])
    out = []
    for tr in tracks:
        idx = sorted(tr["hits"])
        seq = [RadarFrame(f.timestamp, tr["hits"].get(i, np.zeros((0, 5)))) for i, f in enumerate(frames)]
        cents = np.array([tr["hits"][i][:, :3].mean(axis=0) for i in idx])
        out.append(TrackedSubject(frames=seq, frame_indices=idx, centroid_track=cents))
    return out
