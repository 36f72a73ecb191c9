import numpy as np
import pytest

from xreid.dataset import SimConfig, generate, make_record
from xreid.experiments import (body_gap, evaluate, feasibility_study, segmentation_study, sweep,
                               two_walker_trial)
from xreid.gait import GaitParams, WalkSpec, synth_subject
from xreid.radar import NoiseParams, RadarConfig
from xreid.train import TrainConfig


@pytest.fixture(scope="module")
def small():
    return generate(SimConfig(identities=3, walks=4, mesh_points=1500, seed=2))


def test_body_gap_of_shifted_copy():
    spec = WalkSpec.toward_sensor(duration=0.3)
    a = synth_subject(GaitParams(), spec, seed=0, n_points=400)
    b = synth_subject(GaitParams(), WalkSpec.toward_sensor(duration=0.3, lateral_offset=3.0), seed=0, n_points=400)
    width = max(np.ptp(f.points[:, 0]) for f in a.frames)
    assert 3.0 - width - 1e-9 <= body_gap(a, b) <= 3.0


def test_two_walker_trial_hits_requested_gap():
    t = two_walker_trial(1, gap=0.5, mesh_points=2500)
    assert abs(t.gap - 0.5) < 0.02
    assert t.n_tracks == len(t.track_frames)
    assert t.success == (t.n_tracks == 2 and t.swaps == 0)


def test_segmentation_study_reproducible():
    a = segmentation_study(2, seed=7, mesh_points=1500)
    b = segmentation_study(2, seed=7, mesh_points=1500)
    assert a == b and len({t.seed for t in a}) == 2


def test_feasibility_small_cohort():
    res = feasibility_study(identities=3, walks=1, seed=1, cfg=SimConfig(identities=3, walks=1, seed=1,
                                                                         mesh_points=2500))
    assert len(res.same_ccdf) == len(res.different_ccdf) == 101
    assert res.same_ccdf[0] == 1.0
    # each radar frame is compared with two other identities
    assert len(res.different) == 2 * len(res.same)
    assert set(res.per_part_same) <= set(range(6))


def test_split_is_per_identity(small):
    tr, te = small.split()
    for ident in small.identities():
        assert sum(r.identity == ident for r in tr) == 3 and sum(r.identity == ident for r in te) == 1
    again = small.split()
    assert [(r.identity, r.walk) for r in again[1]] == [(r.identity, r.walk) for r in te]


def test_emd_sweeps_have_one_row_per_value(small):
    tc = TrainConfig(epochs=2)
    rows = sweep("frame_count", [5, 10, 25], small, tc, scorer="emd")
    assert [r.value for r in rows] == [5, 10, 25]
    assert all(sorted(r.result.top_k_accuracy) == list(range(1, 4)) for r in rows)
    eps_rows = sweep("epsilon", [2, 7, 30], small, tc, scorer="emd")
    assert [r.value for r in eps_rows] == [2, 7, 30]
    assert all(len(r.result.top_k_accuracy) == 3 for r in eps_rows)


def test_view_angle_beyond_fov_sees_only_clutter(small):
    g = small.cohort[0]
    far = make_record(g, 0, small.config, RadarConfig(), NoiseParams(), view_angle_deg=75.0)
    near = make_record(g, 0, small.config, RadarConfig(), NoiseParams(), view_angle_deg=0.0)
    body = np.vstack([f.points for f in far.rf_signature if len(f)])

    def on_body(frames):
        pts = [f.points[:, :3] for f in frames if len(f)]
        if not pts:
            return 0
        pts = np.vstack(pts)
        return int(sum(np.linalg.norm(body - p, axis=1).min() < 0.3 for p in pts))

    assert len(body) > 0
    assert on_body(far.raw_radar) == 0
    assert sum(len(f) for f in near.radar) > 0


def test_evaluate_rejects_unknown_scorer(small):
    with pytest.raises(ValueError):
        evaluate(small.records, small.records, "psychic")
    with pytest.raises(ValueError):
        evaluate(small.records, small.records, "model", None)
