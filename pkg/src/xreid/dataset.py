"""Synthetic cohorts: paired RF captures and camera-side signatures per walk.

Each (identity, walk) record holds two independent captures of the same
person.  The RF capture walks toward the radar, goes through the specular
model, the radar simulator and segmentation, and becomes the query.  The
camera capture is a separate walk recorded in its own coordinate frame; it
is aligned onto the radar walking lane and turned into the gallery
signature.  A subsample of the aligned raw mesh is kept for the noST
ablation.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSubjectsFound
from .gait import GaitParams, MeshSequence, WalkSpec, make_cohort, synth_subject, vary_walk
from .net import radar_features, signature_features
from .preprocess import segment_subjects
from .radar import NoiseParams, RadarConfig, RadarFrame, simulate_sequence
from .signature import SignatureFrame, Trajectory, align_mesh_to_radar, synthesize_sequence

CAMERA_FLOOR_Z = -1.0
LANE_DISTANCE = 6.3
MESH_KEEP = 32                 # raw-mesh points per frame kept for the noST gallery (about the signature density)


@dataclass
class SimConfig:
    identities: int = 20
    walks: int = 10
    frames: int = 25
    frame_rate: float = 10.0
    mesh_points: int = 5000
    start_distance: tuple = (6.0, 6.6)
    lateral_jitter: float = 0.15
    walk_variation: float = 0.02
    physical_epsilon_deg: float = 7.0      # governs what the radar actually sees
    epsilon_deg: float = 7.0               # used to synthesise gallery signatures
    view_angle_deg: float = 0.0
    seed: int = 0

    @property
    def epsilon(self) -> float:
        return float(np.deg2rad(self.epsilon_deg))


@dataclass
class WalkRecord:
    identity: int
    walk: int
    radar: list                  # segmented RadarFrames (may contain empty frames)
    signature: list              # gallery SignatureFrames from the camera capture
    mesh: list                   # subsampled aligned raw mesh as SignatureFrames
    rf_signature: list = field(default_factory=list)   # signature behind the radar capture
    tracked: bool = True
    raw_radar: list = field(default_factory=list)      # radar frames before segmentation


@dataclass
class Dataset:
    config: SimConfig
    cohort: list
    records: list

    def identities(self) -> list:
        return sorted({r.identity for r in self.records})

    def split(self, train_fraction: float = 0.75, seed: int | None = None):
        """Per identity, a seeded shuffle of walk indices; the first 75% train."""
        seed = self.config.seed if seed is None else seed
        train, test = [], []
        for ident in self.identities():
            recs = sorted((r for r in self.records if r.identity == ident), key=lambda r: r.walk)
            rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, ident, 0x5B1]))
            order = rng.permutation(len(recs))
            n_train = int(round(train_fraction * len(recs)))
            train += [recs[i] for i in sorted(order[:n_train])]
            test += [recs[i] for i in sorted(order[n_train:])]
        return train, test


def _rotate_z(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])


def lane(view_angle_deg: float, lateral: float, distance: float, floor_z: float):
    """Start point and heading of a straight walk toward the radar.

    The lane runs radially toward the device along azimuth ``view_angle``,
    shifted sideways by ``lateral``.
    """
    a = -np.deg2rad(view_angle_deg)
    start = _rotate_z(np.array([lateral, distance, floor_z]), a)
    heading = _rotate_z(np.array([0.0, -1.0, 0.0]), a)
    return start, heading


def subsample_frame(points, parts, limit: int = MESH_KEEP) -> SignatureFrame:
    order = np.lexsort((parts, points[:, 2], points[:, 1], points[:, 0]))
    pick = order[np.unique(np.round(np.linspace(0, points.shape[0] - 1, min(limit, points.shape[0]))).astype(int))]
    return SignatureFrame(0.0, points[pick].copy(), parts[pick].copy())


def rf_capture(gait: GaitParams, cfg: SimConfig, rng, radar_cfg: RadarConfig, noise: NoiseParams,
               view_angle_deg: float | None = None):
    """Mesh walk toward the radar, its signature and the simulated radar frames."""
    view = cfg.view_angle_deg if view_angle_deg is None else view_angle_deg
    g = vary_walk(gait, rng, cfg.walk_variation)
    start, heading = lane(view, rng.uniform(-cfg.lateral_jitter, cfg.lateral_jitter),
                          rng.uniform(*cfg.start_distance), -radar_cfg.mount_height)
    walk = WalkSpec(start=start, heading=heading, duration=cfg.frames / cfg.frame_rate,
                    frame_rate=cfg.frame_rate, direction="toward-sensor")
    mesh = synth_subject(g, walk, int(rng.integers(2**31)), n_points=cfg.mesh_points)
    sig = synthesize_sequence(mesh, epsilon=float(np.deg2rad(cfg.physical_epsilon_deg)))
    radar = simulate_sequence(sig, radar_cfg, noise, int(rng.integers(2**31)))
    return mesh, sig, radar


def camera_capture(gait: GaitParams, cfg: SimConfig, rng, mount_height: float,
                   view_angle_deg: float | None = None) -> MeshSequence:
    """A separate walk recorded in a camera frame, aligned onto the radar lane."""
    view = cfg.view_angle_deg if view_angle_deg is None else view_angle_deg
    g = vary_walk(gait, rng, cfg.walk_variation)
    yaw = rng.uniform(-np.pi, np.pi)
    cam_start = _rotate_z(np.array([0.0, 3.5, CAMERA_FLOOR_Z]), yaw)
    cam_heading = _rotate_z(np.array([0.0, -1.0, 0.0]), yaw)
    walk = WalkSpec(start=cam_start, heading=cam_heading, duration=cfg.frames / cfg.frame_rate,
                    frame_rate=cfg.frame_rate, direction="toward-sensor")
    mesh = synth_subject(g, walk, int(rng.integers(2**31)), n_points=cfg.mesh_points)
    z0 = mesh.frames[0].points[:, 2].mean() - CAMERA_FLOOR_Z - mount_height
    start, heading = lane(view, 0.0, LANE_DISTANCE, z0)
    return align_mesh_to_radar(mesh, Trajectory(origin=start, direction=heading,
                                                per_frame_centers=start[None, :]))


def track_radar(radar: list) -> tuple[list, bool]:
    try:
        track = segment_subjects(radar, expected_subjects=1)[0]
        return track.frames, True
    except NoSubjectsFound:
        return [RadarFrame(f.timestamp, np.zeros((0, 5))) for f in radar], False


def record_seeds(seed: int, identity: int, walk: int):
    """Independent seed streams for the RF and camera captures of one record."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, identity, walk, 0xDA7A])
    return ss.spawn(2)


def aligned_camera_mesh(data: "Dataset", record: "WalkRecord", mount_height: float) -> MeshSequence:
    """Recreate the aligned camera mesh behind a record's gallery signature."""
    _, cam_ss = record_seeds(data.config.seed, record.identity, record.walk)
    gait = {g.identity_id: g for g in data.cohort}[record.identity]
    return camera_capture(gait, data.config, np.random.default_rng(cam_ss), mount_height)


def make_record(gait: GaitParams, walk_index: int, cfg: SimConfig, radar_cfg: RadarConfig,
                noise: NoiseParams, view_angle_deg: float | None = None,
                epsilon_deg: float | None = None) -> WalkRecord:
    rf_ss, cam_ss = record_seeds(cfg.seed, gait.identity_id, walk_index)
    _, rf_sig, radar = rf_capture(gait, cfg, np.random.default_rng(rf_ss), radar_cfg, noise, view_angle_deg)
    frames, ok = track_radar(radar)
    aligned = camera_capture(gait, cfg, np.random.default_rng(cam_ss), radar_cfg.mount_height, view_angle_deg)
    eps = cfg.epsilon_deg if epsilon_deg is None else epsilon_deg
    gallery = synthesize_sequence(aligned, epsilon=float(np.deg2rad(eps)))
    mesh = [dataclasses.replace(subsample_frame(f.points, f.parts), timestamp=f.timestamp)
            for f in aligned.frames]
    return WalkRecord(gait.identity_id, walk_index, frames, gallery, mesh, rf_sig, ok, radar)


def generate(cfg: SimConfig | None = None, radar_cfg: RadarConfig | None = None,
             noise: NoiseParams | None = None, progress=None) -> Dataset:
    cfg = cfg or SimConfig()
    radar_cfg = radar_cfg or RadarConfig()
    noise = noise or NoiseParams()
    cohort = make_cohort(cfg.identities, cfg.seed)
    records = []
    for g in cohort:
        for w in range(cfg.walks):
            records.append(make_record(g, w, cfg, radar_cfg, noise))
            if progress is not None:
                progress(len(records), cfg.identities * cfg.walks)
    return Dataset(cfg, cohort, records)


# ---------------------------------------------------------------------------
# featurisation
# ---------------------------------------------------------------------------

def radar_sequence_features(frames, max_points: int = 64, n_frames: int | None = None):
    """Per-frame radar features with empty frames dropped, or ``None`` if nothing is left."""
    frames = frames[:n_frames] if n_frames else frames
    seq = [radar_features(f.points, max_points) for f in frames]
    seq = [s for s in seq if s.shape[0]]
    return seq or None


def signature_sequence_features(frames, max_points: int = 256, n_frames: int | None = None):
    frames = frames[:n_frames] if n_frames else frames
    seq = [signature_features(f.points, f.parts, max_points) for f in frames]
    seq = [s for s in seq if s.shape[0]]
    return seq or None


def gallery_frames(record: WalkRecord, ablation: str) -> list:
    return record.mesh if ablation == "noST" else record.signature
