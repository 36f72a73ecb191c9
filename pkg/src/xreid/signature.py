"""Specular-reflection signature synthesis from body meshes.

A mesh point is a signature point when its outward surface normal points
at the radar to within ``epsilon``: only those patches mirror energy back
into a small-aperture antenna.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNeighborhood, SubjectStationary
from .gait import MeshFrame, MeshSequence
from .geometry import NORMAL_NEIGHBORS, RigidTransform, estimate_normals

DEFAULT_EPSILON = np.deg2rad(7.0)
MIN_DISPLACEMENT = 0.2


@dataclass
class SignatureFrame:
    timestamp: float
    points: np.ndarray   # (M, 3)
    parts: np.ndarray    # (M,) int8

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls, timestamp: float = 0.0) -> "SignatureFrame":
        return cls(timestamp, np.zeros((0, 3)), np.zeros(0, dtype=np.int8))


@dataclass(frozen=True)
class Trajectory:
    origin: np.ndarray
    direction: np.ndarray
    per_frame_centers: np.ndarray   # (L, 3), non-empty frames only


def estimate_trajectory(frames) -> Trajectory:
    """Straight-line walking trajectory from per-frame centroids.

    ``frames`` is a sequence of ``(N, 3)`` clouds; empty clouds are skipped.
    The direction is the dominant horizontal axis of the centroid track,
    signed to point from the first centroid toward the last.
    """
    centers = [np.asarray(f, dtype=np.float64).reshape(-1, 3).mean(axis=0)
               for f in frames if np.asarray(f).size]
    if len(centers) < 3:
        raise SubjectStationary(f"need >= 3 non-empty frames, got {len(centers)}")
    centers = np.array(centers)
    if np.linalg.norm(centers[-1] - centers[0]) < MIN_DISPLACEMENT:
        raise SubjectStationary("centroid displacement below 0.2 m; heading unobservable")
    xy = centers[:, :2] - centers[:, :2].mean(axis=0)
    _, _, vt = np.linalg.svd(xy, full_matrices=False)
    d = vt[0]
    if np.dot(d, centers[-1, :2] - centers[0, :2]) < 0:
        d = -d
    direction = np.array([d[0], d[1], 0.0])
    direction /= np.linalg.norm(direction)
    return Trajectory(origin=centers[0].copy(), direction=direction, per_frame_centers=centers)


def alignment_transform(mesh: MeshSequence, radar_traj: Trajectory) -> RigidTransform:
    mesh_traj = estimate_trajectory([f.points for f in mesh.frames])
    a = np.arctan2(mesh_traj.direction[1], mesh_traj.direction[0])
    b = np.arctan2(radar_traj.direction[1], radar_traj.direction[0])
    rot = RigidTransform.about_z(b - a).rotation
    center = mesh.frames[0].points.mean(axis=0)
    return RigidTransform(rot, radar_traj.origin - rot @ center)


def transform_mesh(mesh: MeshSequence, t: RigidTransform) -> MeshSequence:
    frames = [MeshFrame(f.timestamp, t.apply(f.points), f.parts.copy(), t.apply(f.subject_center))
              for f in mesh.frames]
    walk = dataclasses.replace(mesh.walk, start=t.apply(mesh.walk.start),
                               heading=t.apply_vectors(mesh.walk.heading))
    return MeshSequence(frames=frames, gait=mesh.gait, walk=walk)


def align_mesh_to_radar(mesh: MeshSequence, radar_traj: Trajectory) -> MeshSequence:
    """Move a mesh sequence into the radar frame.

    One rigid transform, fixed by the first frame, is applied to every
    frame: it puts the first frame's geometric center on the radar
    trajectory origin and turns the mesh walking direction onto the radar
    one.
    """
    return transform_mesh(mesh, alignment_transform(mesh, radar_traj))


def moved_signature(mesh: MeshSequence, normals: list, t: RigidTransform,
                    epsilon: float = DEFAULT_EPSILON) -> list:
    """Signature of ``transform_mesh(mesh, t)`` from normals computed once in the mesh's own frame.

    The specular test only depends on relative geometry, so the radar is
    moved into the mesh frame and the accepted points are moved out.
    """
    radar = t.inverse().apply(np.zeros(3))
    out = []
    for f, n in zip(mesh.frames, normals):
        keep = specular_mask(f.points, n, radar, epsilon)
        out.append(SignatureFrame(f.timestamp, t.apply(f.points[keep]), f.parts[keep].copy()))
    return out


def orient_outward(normals: np.ndarray, points: np.ndarray, center) -> np.ndarray:
    flip = np.einsum("ij,ij->i", normals, points - np.asarray(center)) < 0.0
    out = normals.copy()
    out[flip] = -out[flip]
    return out


def specular_mask(points, normals, radar_pos, epsilon: float) -> np.ndarray:
    """True where the angle between normal and point-to-radar vector is < ``epsilon``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    nrm = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    to_radar = np.asarray(radar_pos, dtype=np.float64) - pts
    dist = np.linalg.norm(to_radar, axis=1)
    cos = np.einsum("ij,ij->i", nrm, to_radar) / (dist * np.linalg.norm(nrm, axis=1))
    return np.arccos(np.clip(cos, -1.0, 1.0)) < epsilon


def frame_normals(mesh_frame: MeshFrame) -> np.ndarray:
    """Outward unit normals of a mesh frame; they move rigidly with the frame."""
    pts = mesh_frame.points
    if pts.shape[0] < NORMAL_NEIGHBORS + 1:
        raise DegenerateNeighborhood(f"frame has {pts.shape[0]} points, need >= {NORMAL_NEIGHBORS + 1}")
    return orient_outward(estimate_normals(pts, NORMAL_NEIGHBORS), pts, mesh_frame.subject_center)


def synthesize_signature(mesh_frame: MeshFrame, radar_pos=(0.0, 0.0, 0.0),
                         epsilon: float = DEFAULT_EPSILON, normals: np.ndarray | None = None) -> SignatureFrame:
    if not 0.0 < epsilon < np.pi / 2:
        raise ValueError("epsilon must lie in (0, pi/2)")
    pts = mesh_frame.points
    if normals is None:
        normals = frame_normals(mesh_frame)
    keep = specular_mask(pts, normals, radar_pos, epsilon)
    return SignatureFrame(mesh_frame.timestamp, pts[keep].copy(), mesh_frame.parts[keep].copy())


def synthesize_sequence(mesh: MeshSequence, radar_pos=(0.0, 0.0, 0.0),
                        epsilon: float = DEFAULT_EPSILON) -> list:
    return [synthesize_signature(f, radar_pos, epsilon) for f in mesh.frames]
