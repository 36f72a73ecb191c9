"""FMCW measurement formulas and a specular point-cloud radar simulator.

Radar frame convention: the device sits at the origin, ``+y`` is boresight,
``+z`` is up (heights are device-relative), ``+x`` completes a right-handed
frame.  Azimuth is ``atan2(x, y)``, elevation ``asin(z / range)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomain
from .signature import SignatureFrame

C = 299_792_458.0


@dataclass(frozen=True)
class RadarConfig:
    start_freq: float = 60.065e9
    bandwidth: float = 3194.88e6
    freq_slope: float = 12.5e12            # 12.5 MHz/us
    chirp_duration: float = 3194.88e6 / 12.5e12
    wavelength: float = C / (60.065e9 + 3194.88e6 / 2)
    antenna_spacing: float = C / (60.065e9 + 3194.88e6 / 2) / 2
    azimuth_fov: float = 60.0              # degrees off boresight, either side
    elevation_fov: float = 30.0
    angular_resolution: float = 15.0
    frame_rate: float = 10.0
    chirps_per_frame: int = 32
    max_points_per_frame: int = 64
    mount_height: float = 0.9
    max_range: float = 15.0

    def validate(self) -> None:
        if abs(self.bandwidth - self.freq_slope * self.chirp_duration) > 1e-6 * self.bandwidth:
            raise ValueError("bandwidth must equal freq_slope * chirp_duration")
        center = C / (self.start_freq + self.bandwidth / 2)
        if abs(self.wavelength - center) > 0.01 * center:
            raise ValueError("wavelength inconsistent with the chirp center frequency")
        if not 0 < self.angular_resolution <= self.azimuth_fov:
            raise ValueError("angular_resolution must lie in (0, azimuth_fov]")
        if self.frame_rate <= 0 or self.max_points_per_frame < 1:
            raise ValueError("frame_rate and max_points_per_frame must be positive")

    @property
    def range_resolution(self) -> float:
        return C / (2.0 * self.bandwidth)


@dataclass(frozen=True)
class NoiseParams:
    ghost_rate: float = 1.0
    position_sigma: float = 0.02
    dropout_prob: float = 0.1

    def validate(self) -> None:
        if self.ghost_rate < 0 or self.position_sigma < 0:
            raise ValueError("noise magnitudes must be >= 0")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must lie in [0, 1)")

    @classmethod
    def noiseless(cls) -> "NoiseParams":
        return cls(0.0, 0.0, 0.0)


@dataclass
class RadarFrame:
    timestamp: float
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))  # x, y, z, intensity, radial velocity

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]


def range_from_if(f_if: float, cfg: RadarConfig = RadarConfig()) -> float:
    if f_if < 0:
        raise ValueError("IF frequency must be >= 0")
    return f_if * C * cfg.chirp_duration / (2.0 * cfg.bandwidth)


def aoa_from_phase(omega: float, cfg: RadarConfig = RadarConfig()) -> float:
    arg = cfg.wavelength * omega / (2.0 * np.pi * cfg.antenna_spacing)
    if abs(arg) > 1.0:
        raise OutOfDomain(f"arcsin argument {arg:.6g} outside [-1, 1]")
    return float(np.arcsin(arg))


def spherical(points: np.ndarray):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rng = np.linalg.norm(pts, axis=1)
    az = np.degrees(np.arctan2(pts[:, 0], pts[:, 1]))
    with np.errstate(invalid="ignore", divide="ignore"):
        el = np.degrees(np.arcsin(np.where(rng > 0, pts[:, 2] / np.where(rng > 0, rng, 1.0), 0.0)))
    return rng, az, el


def in_fov(points: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    rng, az, el = spherical(points)
    return ((rng > 0) & (rng <= cfg.max_range)
            & (np.abs(az) <= cfg.azimuth_fov) & (np.abs(el) <= cfg.elevation_fov))


def bin_points(points: np.ndarray, cfg: RadarConfig):
    """Group in-FoV points into (range, azimuth, elevation) resolution cells.

    Returns ``(keys, centroids, counts, cell_of_point, mask)`` where ``keys``
    is ``(B, 3)`` integer cell indices sorted lexicographically.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    mask = in_fov(pts, cfg)
    sel = pts[mask]
    if sel.shape[0] == 0:
        return (np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3)), np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.int64), mask)
    rng, az, el = spherical(sel)
    keys = np.column_stack([np.floor(rng / cfg.range_resolution),
                            np.floor(az / cfg.angular_resolution),
                            np.floor(el / cfg.angular_resolution)]).astype(np.int64)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((uniq.shape[0], 3))
    np.add.at(sums, inverse, sel)
    return uniq, sums / counts[:, None], counts, inverse, mask


def _cell_ranges(points: np.ndarray, cfg: RadarConfig) -> dict:
    """Range of the centroid of all points sharing an angular cell."""
    keys, cents, counts, _, _ = bin_points(points, cfg)
    out = {}
    if keys.shape[0] == 0:
        return out
    sums = {}
    for key, c, n in zip(map(tuple, keys[:, 1:]), cents, counts):
        s, m = sums.get(key, (np.zeros(3), 0))
        sums[key] = (s + c * n, m + n)
    for key, (s, m) in sums.items():
        out[key] = float(np.linalg.norm(s / m))
    return out


def simulate_frame(sig: SignatureFrame, cfg: RadarConfig = RadarConfig(),
                   noise: NoiseParams = NoiseParams(), prev: SignatureFrame | None = None,
                   seed: int = 0) -> RadarFrame:
    """Turn one signature frame into a sparse radar detection frame.

    Each occupied resolution cell yields one detection at the cell centroid
    with intensity equal to its signature-point count.  Radial velocity is
    the frame-to-frame range rate of the centroid of the detection's angular
    cell (0 without a previous frame or when that cell was empty).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x5AD]))
    keys, cents, counts, _, _ = bin_points(sig.points, cfg)
    n = keys.shape[0]
    vel = np.zeros(n)
    if prev is not None and n:
        now = _cell_ranges(sig.points, cfg)
        before = _cell_ranges(prev.points, cfg)
        for i, key in enumerate(map(tuple, keys[:, 1:])):
            if key in before:
                vel[i] = (now[key] - before[key]) * cfg.frame_rate
    pts = np.column_stack([cents, counts.astype(np.float64), vel]) if n else np.zeros((0, 5))
    if n and noise.position_sigma > 0:
        pts[:, :3] += rng.normal(0.0, noise.position_sigma, size=(n, 3))
        pts = pts[in_fov(pts[:, :3], cfg)]
    if pts.shape[0] and noise.dropout_prob > 0:
        pts = pts[rng.random(pts.shape[0]) >= noise.dropout_prob]
    n_ghost = rng.poisson(noise.ghost_rate) if noise.ghost_rate > 0 else 0
    if n_ghost:
        r = rng.uniform(0.3, cfg.max_range, n_ghost)
        az = np.radians(rng.uniform(-cfg.azimuth_fov, cfg.azimuth_fov, n_ghost))
        el = np.radians(rng.uniform(-cfg.elevation_fov, cfg.elevation_fov, n_ghost))
        xyz = np.column_stack([r * np.cos(el) * np.sin(az), r * np.cos(el) * np.cos(az), r * np.sin(el)])
        if pts.shape[0]:
            pick = rng.integers(0, pts.shape[0], n_ghost)
            inten, v = pts[pick, 3], pts[pick, 4]
        else:
            inten, v = np.ones(n_ghost), np.zeros(n_ghost)
        pts = np.vstack([pts, np.column_stack([xyz, inten, v])])
    if pts.shape[0] > cfg.max_points_per_frame:
        keep = np.sort(np.argsort(-pts[:, 3], kind="stable")[: cfg.max_points_per_frame])
        pts = pts[keep]
    return RadarFrame(sig.timestamp, pts)


def simulate_sequence(sigs, cfg: RadarConfig = RadarConfig(), noise: NoiseParams = NoiseParams(),
                      seed: int = 0) -> list:
    out = []
    for i, sig in enumerate(sigs):
        prev = sigs[i - 1] if i > 0 else None
        frame_seed = int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, i]).generate_state(1)[0])
        out.append(simulate_frame(sig, cfg, noise, prev, frame_seed))
    return out
