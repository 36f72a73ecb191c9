"""ReID evaluation, the feasibility study and sensitivity sweeps on synthetic cohorts."""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dataset import (Dataset, SimConfig, WalkRecord, aligned_camera_mesh, gallery_frames, generate, make_record,
                      radar_sequence_features, rf_capture, signature_sequence_features, track_radar)
from .errors import NoSubjectsFound
from .gait import WalkSpec, make_cohort, synth_subject
from .metrics import CCDF_GRID, CMCResult, EmptyRadarFrameWarning, ccdf, cmc_from_scores, emd_similarity, intersection_study
from .net import MetricNet
from .preprocess import segment_subjects
from .radar import NoiseParams, RadarConfig, simulate_sequence
from .signature import (SignatureFrame, alignment_transform, estimate_trajectory, frame_normals, moved_signature,
                        synthesize_sequence)
from .train import TrainConfig, TrainResult, TripletSource, train

SWEEPS = ("epsilon", "view_angle", "frame_count", "gallery_size", "records_per_subject")


def training_source(records, ablation: str = "full", radar_max: int = 64, sig_max: int = 256) -> TripletSource:
    radar, radar_ids, sig, sig_ids = [], [], [], []
    for r in records:
        q = radar_sequence_features(r.radar, radar_max)
        if q is not None:
            radar.append(q)
            radar_ids.append(r.identity)
        g = signature_sequence_features(gallery_frames(r, ablation), sig_max)
        if g is not None:
            sig.append(g)
            sig_ids.append(r.identity)
    return TripletSource(radar, np.array(radar_ids), sig, np.array(sig_ids))


def train_on(records, cfg: TrainConfig, progress=None) -> TrainResult:
    return train(training_source(records, cfg.ablation), cfg, progress)


def model_scores(model: MetricNet, queries, gallery, ablation: str = "full",
                 n_frames: int | None = None) -> np.ndarray:
    """Similarity matrix (negative embedding distance); empty queries score 0 everywhere."""
    cfg = model.config
    q_feats = [radar_sequence_features(r.radar, cfg.radar_max_points, n_frames) for r in queries]
    g_feats = [signature_sequence_features(gallery_frames(r, ablation), cfg.sig_max_points, n_frames)
               for r in gallery]
    g_ok = [i for i, f in enumerate(g_feats) if f is not None]
    q_ok = [i for i, f in enumerate(q_feats) if f is not None]
    scores = np.zeros((len(queries), len(gallery)))
    if not g_ok or not q_ok:
        return scores
    g_emb = model.embed_many("sig", [g_feats[i] for i in g_ok])
    q_emb = model.embed_many("radar", [q_feats[i] for i in q_ok])
    dist = np.linalg.norm(q_emb[:, None, :] - g_emb[None, :, :], axis=2)
    scores[:] = -np.inf
    scores[np.ix_(q_ok, g_ok)] = -dist
    scores[np.setdiff1d(np.arange(len(queries)), q_ok)] = 0.0
    return scores


def emd_scores(queries, gallery, n_frames: int | None = None) -> np.ndarray:
    scores = np.zeros((len(queries), len(gallery)))
    for qi, q in enumerate(queries):
        radar = q.radar[:n_frames] if n_frames else q.radar
        if not any(f.points.shape[0] for f in radar):
            continue
        for gi, g in enumerate(gallery):
            sig = g.signature[:n_frames] if n_frames else g.signature
            scores[qi, gi] = emd_similarity(radar, sig)
    return scores


def evaluate(queries, gallery, scorer: str = "model", model: MetricNet | None = None,
             ablation: str = "full", n_frames: int | None = None) -> CMCResult:
    if scorer == "emd":
        scores = emd_scores(queries, gallery, n_frames)
    elif scorer == "model":
        if model is None:
            raise ValueError("model scorer needs a trained model")
        scores = model_scores(model, queries, gallery, ablation, n_frames)
    else:
        raise ValueError(f"unknown scorer {scorer!r}")
    return cmc_from_scores(scores, [q.identity for q in queries], [g.identity for g in gallery])


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityResult:
    same: list
    different: list
    same_ccdf: np.ndarray
    different_ccdf: np.ndarray
    per_part_same: dict = field(default_factory=dict)
    grid: np.ndarray = field(default_factory=lambda: CCDF_GRID.copy())

    @property
    def gap(self) -> float:
        return float(np.mean(self.same) - np.mean(self.different))


def feasibility_study(identities: int = 10, walks: int = 2, seed: int = 0, delta: float | None = None,
                      cfg: SimConfig | None = None, radar_cfg: RadarConfig | None = None,
                      noise: NoiseParams | None = None) -> FeasibilityResult:
    """Per-frame intersection ratios of radar tracks against same- and other-identity signatures.

    The other-identity signature comes from that person's mesh moved onto
    the radar subject's trajectory, so only body shape and gait differ.
    """
    cfg = cfg or SimConfig(identities=identities, walks=walks, seed=seed)
    radar_cfg = radar_cfg or RadarConfig()
    noise = noise or NoiseParams()
    delta = radar_cfg.range_resolution + noise.position_sigma if delta is None else delta
    eps = float(np.deg2rad(cfg.epsilon_deg))
    cohort = make_cohort(identities, seed)
    captures = []
    for g in cohort:
        for w in range(walks):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, g.identity_id, w, 0xFEA5]))
            mesh, sig, radar = rf_capture(g, cfg, rng, radar_cfg, noise)
            frames, _ = track_radar(radar)
            captures.append((g.identity_id, mesh, sig, frames, [frame_normals(f) for f in mesh.frames]))
    same, diff = [], []
    parts_acc: dict = {}
    # empty radar frames are dropped below, so their warning is noise here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyRadarFrameWarning)
        for ident, mesh, sig, frames, _ in captures:
            res = intersection_study(frames, sig, delta)
            keep = [i for i, f in enumerate(frames) if f.points.shape[0]]
            same += [res.per_frame_ratio[i] for i in keep]
            for p, v in res.per_part_ratio.items():
                parts_acc.setdefault(p, []).append(v)
            traj = estimate_trajectory([f.points for f in mesh.frames])
            for other_id, other_mesh, _, _, other_normals in captures:
                if other_id == ident:
                    continue
                other_sig = moved_signature(other_mesh, other_normals, alignment_transform(other_mesh, traj), eps)
                r = intersection_study(frames, other_sig, delta)
                diff += [r.per_frame_ratio[i] for i in keep]
    per_part = {p: float(np.mean(v)) for p, v in sorted(parts_acc.items())}
    return FeasibilityResult(same, diff, ccdf(same), ccdf(diff), per_part)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    value: float
    result: CMCResult


def _subset(records, identities=None, per_subject=None):
    out, seen = [], {}
    for r in records:
        if identities is not None and r.identity not in identities:
            continue
        seen[r.identity] = seen.get(r.identity, 0) + 1
        if per_subject is None or seen[r.identity] <= per_subject:
            out.append(r)
    return out


def sweep(experiment: str, grid, data: Dataset, train_cfg: TrainConfig, scorer: str = "model",
          model: MetricNet | None = None, radar_cfg: RadarConfig | None = None,
          noise: NoiseParams | None = None, progress=None) -> list:
    """CMC per grid value.

    ``frame_count``, ``gallery_size`` and ``records_per_subject`` reuse one
    model trained on the base data and filter the test split.  ``epsilon``
    resynthesises every gallery signature and retrains.  ``view_angle``
    regenerates the test captures at each angle and scores them with the
    model trained on the base data.
    """
    if experiment not in SWEEPS:
        raise ValueError(f"experiment must be one of {SWEEPS}")
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be non-empty")
    radar_cfg = radar_cfg or RadarConfig()
    noise = noise or NoiseParams()
    ablation = train_cfg.ablation
    train_recs, test_recs = data.split()

    def fit(recs):
        return train_on(recs, train_cfg).model if scorer == "model" else None

    if experiment != "epsilon" and model is None:
        model = fit(train_recs)
    rows = []
    for value in grid:
        if experiment == "frame_count":
            res = evaluate(test_recs, test_recs, scorer, model, ablation, n_frames=int(value))
        elif experiment == "gallery_size":
            ids = set(data.identities()[: int(value)])
            recs = _subset(test_recs, identities=ids)
            res = evaluate(recs, recs, scorer, model, ablation)
        elif experiment == "records_per_subject":
            gallery = _subset(test_recs, per_subject=int(value))
            res = evaluate(test_recs, gallery, scorer, model, ablation)
        elif experiment == "epsilon":
            recs = [dataclasses.replace(r, signature=synthesize_sequence(
                        aligned_camera_mesh(data, r, radar_cfg.mount_height), epsilon=float(np.deg2rad(value))))
                    for r in data.records]
            eps_data = Dataset(dataclasses.replace(data.config, epsilon_deg=float(value)), data.cohort, recs)
            tr, te = eps_data.split()
            res = evaluate(te, te, scorer, fit(tr), ablation)
        else:
            by_id = {g.identity_id: g for g in data.cohort}
            recs = [make_record(by_id[r.identity], r.walk, data.config, radar_cfg, noise,
                                view_angle_deg=float(value)) for r in test_recs]
            res = evaluate(recs, recs, scorer, model, ablation)
        rows.append(SweepRow(float(value), res))
        if progress is not None:
            progress(value, res)
    return rows


# ---------------------------------------------------------------------------
# two-walker segmentation
# ---------------------------------------------------------------------------

@dataclass
class SeparationTrial:
    seed: int
    gap: float                 # smallest horizontal body-to-body distance over the walk
    n_tracks: int
    track_frames: tuple
    swaps: int
    success: bool


def body_gap(mesh_a, mesh_b) -> float:
    return float(min(cKDTree(fa.points[:, :2]).query(fb.points[:, :2])[0].min()
                     for fa, fb in zip(mesh_a.frames, mesh_b.frames)))


def _frame_owner(points, sig_points, labels, reach: float = 0.3):
    if not points.shape[0] or not sig_points.shape[0]:
        return None
    d, i = cKDTree(sig_points).query(points[:, :3])
    lab = labels[i][d < reach]
    if not lab.size:
        return None
    return int(np.bincount(lab).argmax())


def two_walker_trial(seed: int, gap: float = 0.5, frames: int = 25, mesh_points: int = 5000,
                     radar_cfg: RadarConfig | None = None, noise: NoiseParams | None = None) -> SeparationTrial:
    """Two people walking side by side toward the radar, ``gap`` metres apart.

    The lanes are spaced so the closest horizontal distance between the two
    bodies over the whole walk equals ``gap``.  Every radar point is
    labelled with the walker of its nearest signature point; a track swaps
    identity whenever its per-frame majority label changes.
    """
    radar_cfg = radar_cfg or RadarConfig()
    noise = noise or NoiseParams()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x2B]))
    pair = make_cohort(2, seed)
    distance = rng.uniform(5.5, 6.3)
    seeds = [int(s) for s in rng.integers(2**31, size=2)]
    duration = frames / radar_cfg.frame_rate

    def walk(i, lateral):
        spec = WalkSpec(start=np.array([lateral, distance, -radar_cfg.mount_height]),
                        heading=np.array([0.0, -1.0, 0.0]), duration=duration,
                        frame_rate=radar_cfg.frame_rate)
        return synth_subject(pair[i], spec, seeds[i], n_points=mesh_points)

    spacing = 2.0 * gap
    for _ in range(3):
        spacing += gap - body_gap(walk(0, -spacing / 2), walk(1, spacing / 2))
    mesh_a, mesh_b = walk(0, -spacing / 2), walk(1, spacing / 2)
    sig_a, sig_b = synthesize_sequence(mesh_a), synthesize_sequence(mesh_b)
    both = [SignatureFrame(a.timestamp, np.vstack([a.points, b.points]), np.concatenate([a.parts, b.parts]))
            for a, b in zip(sig_a, sig_b)]
    labels = [np.repeat([0, 1], [len(a), len(b)]) for a, b in zip(sig_a, sig_b)]
    radar = simulate_sequence(both, radar_cfg, noise, int(rng.integers(2**31)))
    try:
        tracks = segment_subjects(radar)
    except NoSubjectsFound:
        tracks = []
    swaps, owners = 0, []
    for tr in tracks:
        seq = [_frame_owner(tr.frames[i].points, both[i].points, labels[i]) for i in tr.frame_indices]
        seq = [o for o in seq if o is not None]
        swaps += sum(a != b for a, b in zip(seq, seq[1:]))
        owners.append(seq[0] if seq else None)
    success = len(tracks) == 2 and swaps == 0 and None not in owners and owners[0] != owners[1]
    return SeparationTrial(int(seed), body_gap(mesh_a, mesh_b), len(tracks),
                           tuple(tr.length for tr in tracks), swaps, success)


def segmentation_study(trials: int = 50, gap: float = 0.5, seed: int = 0, **kw) -> list:
    base = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x5E6])
    return [two_walker_trial(int(s.generate_state(1)[0]), gap, **kw) for s in base.spawn(trials)]
