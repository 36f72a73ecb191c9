"""Parametric walking-human generator.

The body is six capsules (head, torso, two arms, two legs).  Joint angles
are sinusoids at half the step cadence, legs in antiphase, each arm in
antiphase with the leg on its own side.  Surface samples are laid out once
per sequence in capsule-local coordinates, so every frame carries the same
points per body part, and then posed frame by frame with Gaussian jitter.

Legs telescope so the foot ends stay on the floor: the swing angle is set
from the stride so that the fore-aft foot excursion equals ``stride_length``
and both feet keep floor contact, which keeps head-to-floor extent equal to
the subject height in every frame.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import CohortTooLarge, InvalidParams
from .geometry import unit

HEAD, TORSO, LEFT_ARM, RIGHT_ARM, LEFT_LEG, RIGHT_LEG = range(6)
PART_NAMES = ("head", "torso", "left-arm", "right-arm", "left-leg", "right-leg")
N_PARTS = 6

DEFAULT_POINTS = 2500
DEFAULT_JITTER = 0.005
NECK = 0.03


@dataclass(frozen=True)
class GaitParams:
    height: float = 1.70
    leg_length_ratio: float = 0.48
    arm_length_ratio: float = 0.40
    torso_radius: float = 0.15
    limb_radius: float = 0.06
    head_radius: float = 0.10
    stride_length: float = 0.65
    cadence: float = 2.0
    arm_swing_amplitude: float = 0.35
    torso_sway_amplitude: float = 0.02
    phase_offset: float = 0.0
    identity_id: int = 0

    def validate(self) -> None:
        if not 1.4 <= self.height <= 2.0:
            raise InvalidParams(f"height {self.height} outside [1.4, 2.0] m")
        if not 0.3 <= self.stride_length <= 1.0:
            raise InvalidParams(f"stride_length {self.stride_length} outside [0.3, 1.0] m")
        if not 1.2 <= self.cadence <= 2.6:
            raise InvalidParams(f"cadence {self.cadence} outside [1.2, 2.6] steps/s")
        if not 0.0 <= self.arm_swing_amplitude <= 0.9:
            raise InvalidParams(f"arm_swing_amplitude {self.arm_swing_amplitude} outside [0, 0.9] rad")
        if min(self.torso_radius, self.limb_radius, self.head_radius) <= 0:
            raise InvalidParams("all radii must be positive")
        if not 0.3 <= self.leg_length_ratio <= 0.6 or not 0.25 <= self.arm_length_ratio <= 0.55:
            raise InvalidParams("limb length ratios out of anatomical range")
        if self.torso_sway_amplitude < 0:
            raise InvalidParams("torso_sway_amplitude must be >= 0")
        if self.shoulder_height <= self.hip_height:
            raise InvalidParams("head and leg proportions leave no room for a torso")

    def style(self) -> tuple:
        """Every field except ``identity_id``."""
        d = dataclasses.asdict(self)
        d.pop("identity_id")
        return tuple(d.values())

    @property
    def hip_height(self) -> float:
        return self.leg_length_ratio * self.height

    @property
    def shoulder_height(self) -> float:
        return self.height - 2.0 * self.head_radius - NECK

    @property
    def speed(self) -> float:
        return self.stride_length * self.cadence

    @property
    def cycle_period(self) -> float:
        return 2.0 / self.cadence

    @property
    def leg_swing_amplitude(self) -> float:
        drop = self.hip_height - self.limb_radius
        return float(np.arctan(self.stride_length / (2.0 * drop)))


@dataclass(frozen=True)
class WalkSpec:
    start: np.ndarray = field(default_factory=lambda: np.array([0.0, 6.5, -0.9]))
    heading: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    duration: float = 2.5
    frame_rate: float = 10.0
    direction: str = "toward-sensor"
    lateral_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=np.float64).reshape(3))
        object.__setattr__(self, "heading", np.asarray(self.heading, dtype=np.float64).reshape(3))

    @classmethod
    def toward_sensor(cls, distance: float = 6.5, lateral_offset: float = 0.0,
                      floor_z: float = -0.9, **kw) -> "WalkSpec":
        return cls(start=np.array([0.0, distance, floor_z]), heading=np.array([0.0, -1.0, 0.0]),
                   direction="toward-sensor", lateral_offset=lateral_offset, **kw)

    @classmethod
    def away_from_sensor(cls, distance: float = 2.0, lateral_offset: float = 0.0,
                         floor_z: float = -0.9, **kw) -> "WalkSpec":
        return cls(start=np.array([0.0, distance, floor_z]), heading=np.array([0.0, 1.0, 0.0]),
                   direction="away-from-sensor", lateral_offset=lateral_offset, **kw)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def validate(self) -> None:
        if self.frame_rate <= 0 or self.duration <= 0:
            raise InvalidParams("frame_rate and duration must be positive")
        if self.n_frames < 1:
            raise InvalidParams("walk shorter than one frame")
        if abs(self.heading[2]) > 1e-12 or abs(np.linalg.norm(self.heading) - 1.0) > 1e-9:
            raise InvalidParams("heading must be a horizontal unit vector")
        if self.direction not in ("toward-sensor", "away-from-sensor"):
            raise InvalidParams(f"unknown direction {self.direction!r}")
        radial = float(np.dot(self.heading[:2], self.start[:2]))
        if self.direction == "toward-sensor" and radial > 0:
            raise InvalidParams("heading points away from the sensor for a toward-sensor walk")
        if self.direction == "away-from-sensor" and radial < 0:
            raise InvalidParams("heading points toward the sensor for an away-from-sensor walk")

    @property
    def left(self) -> np.ndarray:
        return np.cross([0.0, 0.0, 1.0], self.heading)


@dataclass
class MeshFrame:
    timestamp: float
    points: np.ndarray          # (N, 3)
    parts: np.ndarray           # (N,) int8 body-part labels
    subject_center: np.ndarray  # (3,)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class MeshSequence:
    frames: list
    gait: GaitParams
    walk: WalkSpec

    def __len__(self) -> int:
        return len(self.frames)


# ---------------------------------------------------------------------------
# body layout
# ---------------------------------------------------------------------------

@dataclass
class _Layout:
    """Per-point capsule-local sample parameters, fixed for a sequence."""

    part: np.ndarray     # (N,) segment index == body-part label
    kind: np.ndarray     # 0 cylinder, 1 cap at joint end, 2 cap at distal end, 3 sphere
    s: np.ndarray        # axial fraction on the cylinder
    dirs: np.ndarray     # (N, 3) unit direction in (e1, e2, axis) frame


def _segment_radii(g: GaitParams) -> np.ndarray:
    return np.array([g.head_radius, g.torso_radius, g.limb_radius, g.limb_radius,
                     g.limb_radius, g.limb_radius])


def _rest_lengths(g: GaitParams) -> np.ndarray:
    arm = g.arm_length_ratio * g.height - g.limb_radius
    leg = g.hip_height - g.limb_radius
    torso = g.shoulder_height - g.hip_height
    return np.array([0.0, torso, arm, arm, leg, leg])


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    raw = weights / weights.sum() * total
    counts = np.floor(raw).astype(int)
    rem = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rem]] += 1
    return np.maximum(counts, 1)


def _make_layout(g: GaitParams, n_points: int, rng: np.random.Generator) -> _Layout:
    radii = _segment_radii(g)
    lengths = _rest_lengths(g)
    areas = 2.0 * np.pi * radii * lengths + 4.0 * np.pi * radii ** 2
    counts = _allocate(n_points, areas)
    parts, kinds, ss, dirs = [], [], [], []
    for seg, n in enumerate(counts):
        r, length = radii[seg], lengths[seg]
        if length == 0.0:
            kind = np.full(n, 3)
        else:
            cyl = 2.0 * np.pi * r * length
            cap = 2.0 * np.pi * r * r
            kind = rng.choice(3, size=n, p=np.array([cyl, cap, cap]) / (cyl + 2 * cap))
        phi = rng.uniform(0.0, 2.0 * np.pi, n)
        u = rng.uniform(-1.0, 1.0, n)           # cosine of polar angle for spheres
        u = np.where((kind == 1) | (kind == 2), np.abs(u), u)
        u = np.where(kind == 1, -u, u)          # joint-end cap points back along the axis
        rho = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
        d = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), u])
        d[kind == 0] = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(n)])[kind == 0]
        parts.append(np.full(n, seg))
        kinds.append(kind)
        ss.append(rng.uniform(0.0, 1.0, n))
        dirs.append(d)
    return _Layout(np.concatenate(parts).astype(np.int8), np.concatenate(kinds),
                   np.concatenate(ss), np.vstack(dirs))


def joint_angles(g: GaitParams, t) -> dict:
    """Sagittal swing angles (radians, positive = swung forward) at time(s) ``t``."""
    t = np.asarray(t, dtype=np.float64)
    phase = np.pi * g.cadence * t + g.phase_offset   # angular frequency of cadence/2 Hz
    leg = g.leg_swing_amplitude * np.sin(phase)
    arm = g.arm_swing_amplitude * np.sin(phase)
    return {"left_leg": leg, "right_leg": -leg, "left_arm": -arm, "right_arm": arm,
            "sway": g.torso_sway_amplitude * np.sin(phase)}


def _segments(g: GaitParams, t: float):
    """Capsule endpoints (body-local a=forward, b=left, c=up) and axis frames."""
    ang = joint_angles(g, t)
    hip_z, sh_z = g.hip_height, g.shoulder_height
    hip_b = 0.55 * g.torso_radius
    arm_b = g.torso_radius + g.limb_radius
    arm_len = g.arm_length_ratio * g.height - g.limb_radius
    drop = hip_z - g.limb_radius
    segs = []
    head = np.array([0.0, 0.0, g.height - g.head_radius])
    segs.append((head, head))
    segs.append((np.array([0.0, 0.0, hip_z]), np.array([0.0, 0.0, sh_z])))
    for side, key in ((1.0, "left_arm"), (-1.0, "right_arm")):
        a = ang[key]
        p0 = np.array([0.0, side * arm_b, sh_z])
        segs.append((p0, p0 + arm_len * np.array([np.sin(a), 0.0, -np.cos(a)])))
    for side, key in ((1.0, "left_leg"), (-1.0, "right_leg")):
        a = ang[key]
        p0 = np.array([0.0, side * hip_b, hip_z])
        foot = np.array([drop * np.tan(a), side * hip_b, g.limb_radius])
        segs.append((p0, foot))
    return segs, float(ang["sway"])


def _pose_points(g: GaitParams, layout: _Layout, t: float) -> np.ndarray:
    segs, sway = _segments(g, t)
    radii = _segment_radii(g)
    out = np.empty((layout.part.size, 3))
    left = np.array([0.0, 1.0, 0.0])
    for seg, (p0, p1) in enumerate(segs):
        sel = layout.part == seg
        r = radii[seg]
        d = layout.dirs[sel]
        kind = layout.kind[sel]
        axis_vec = p1 - p0
        length = np.linalg.norm(axis_vec)
        if length == 0.0:
            out[sel] = p0 + r * d
            continue
        ax = axis_vec / length
        e1 = left - np.dot(left, ax) * ax
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(ax, e1)
        base = np.where((kind == 2)[:, None], p1, p0)
        base = np.where((kind == 0)[:, None], p0 + layout.s[sel][:, None] * axis_vec, base)
        local = d[:, 0:1] * e1 + d[:, 1:2] * e2 + d[:, 2:3] * ax
        out[sel] = base + r * local
    out[:, 1] += sway
    return out


def synth_subject(gait: GaitParams, walk: WalkSpec, seed: int, *,
                  n_points: int = DEFAULT_POINTS, jitter: float = DEFAULT_JITTER) -> MeshSequence:
    """Simulate one walk as a sequence of labelled body-surface samples.

    ``walk.start`` is the floor point under the pelvis at t=0.  Output is
    deterministic in ``(gait, walk, seed, n_points, jitter)``.
    """
    gait.validate()
    walk.validate()
    if n_points < 7 * N_PARTS:
        raise InvalidParams("n_points too small to cover every body part")
    if jitter < 0:
        raise InvalidParams("jitter must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x6A17]))
    layout = _make_layout(gait, n_points, rng)
    fwd = walk.heading
    left = walk.left
    up = np.array([0.0, 0.0, 1.0])
    basis = np.stack([fwd, left, up])      # rows map local (a, b, c) to world
    origin = walk.start + walk.lateral_offset * left
    frames = []
    for i in range(walk.n_frames):
        t = i / walk.frame_rate
        local = _pose_points(gait, layout, t)
        root = origin + fwd * gait.speed * t
        pts = root + local @ basis
        if jitter > 0:
            pts = pts + rng.normal(0.0, jitter, size=pts.shape)
        frames.append(MeshFrame(timestamp=t, points=pts, parts=layout.part.copy(),
                                subject_center=pts.mean(axis=0)))
    return MeshSequence(frames=frames, gait=gait, walk=walk)


def make_cohort(n_identities: int, seed: int, max_attempts: int = 20000) -> list:
    """Draw ``n_identities`` distinct walking styles.

    Heights are stratified over [1.45, 1.95] m so the cohort always spans
    the range; any two identities differ by at least 5% in two or more of
    height, stride length, cadence and arm swing. Walking speed is kept in
    [0.7, 1.6] m/s so a walk stays inside the radar's field of view.
    """
    if n_identities < 2:
        raise InvalidParams("a cohort needs at least 2 identities")
    if n_identities > 200:
        raise CohortTooLarge(f"separation cannot be guaranteed for {n_identities} identities")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0xC0407]))
    lo, hi = 1.45, 1.95
    width = (hi - lo) / n_identities
    heights = lo + width * (np.arange(n_identities) + rng.uniform(0.0, 1.0, n_identities))
    heights = rng.permutation(heights)
    cohort: list[GaitParams] = []
    keys = []
    for i in range(n_identities):
        for _ in range(max_attempts):
            h = float(heights[i])
            g = GaitParams(
                height=h,
                leg_length_ratio=float(rng.uniform(0.44, 0.52)),
                arm_length_ratio=float(rng.uniform(0.36, 0.44)),
                torso_radius=float(rng.uniform(0.11, 0.20)),
                limb_radius=float(rng.uniform(0.045, 0.075)),
                head_radius=float(rng.uniform(0.09, 0.115)),
                stride_length=float(np.clip(h * rng.uniform(0.28, 0.52), 0.3, 1.0)),
                cadence=float(rng.uniform(1.3, 2.5)),
                arm_swing_amplitude=float(rng.uniform(0.05, 0.85)),
                torso_sway_amplitude=float(rng.uniform(0.01, 0.04)),
                phase_offset=0.0,
                identity_id=i,
            )
            if not 0.7 <= g.speed <= 1.6:
                continue
            key = np.array([g.height, g.stride_length, g.cadence, g.arm_swing_amplitude])
            if all(_separated(key, other) for other in keys):
                cohort.append(g)
                keys.append(key)
                break
        else:
            raise CohortTooLarge(f"could not place identity {i} after {max_attempts} draws")
    return cohort


def _separated(a: np.ndarray, b: np.ndarray, rel: float = 0.05, need: int = 2) -> bool:
    diff = np.abs(a - b) / np.maximum(np.abs(a), np.abs(b))
    return int(np.sum(diff >= rel)) >= need


def vary_walk(g: GaitParams, rng: np.random.Generator, rel: float = 0.02) -> GaitParams:
    """Per-walk perturbation: fresh phase and a few percent of speed change."""
    stride = float(np.clip(g.stride_length * (1.0 + rng.uniform(-rel, rel)), 0.3, 1.0))
    cadence = float(np.clip(g.cadence * (1.0 + rng.uniform(-rel, rel)), 1.2, 2.6))
    return dataclasses.replace(g, stride_length=stride, cadence=cadence,
                               phase_offset=float(rng.uniform(0.0, 2.0 * np.pi)))
