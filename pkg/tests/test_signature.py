import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xreid.errors import DegenerateNeighborhood, SubjectStationary
from xreid.gait import GaitParams, MeshFrame, WalkSpec, synth_subject
from xreid.geometry import RigidTransform, random_rotation
from xreid.signature import (Trajectory, align_mesh_to_radar, alignment_transform, estimate_trajectory, frame_normals,
                             moved_signature, specular_mask, synthesize_sequence, synthesize_signature,
                             transform_mesh)


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    th = np.pi * (1 + 5 ** 0.5) * i
    return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])


def sphere_frame(n=5000, r=0.3, center=(0.0, 5.0, 0.0)):
    c = np.asarray(center)
    u = fibonacci_sphere(n)
    return MeshFrame(0.0, c + r * u, np.zeros(n, dtype=np.int8), c), u


def accepted_mask(frame, sig):
    index = {p.tobytes(): i for i, p in enumerate(frame.points)}
    mask = np.zeros(len(frame.points), dtype=bool)
    mask[[index[p.tobytes()] for p in sig.points]] = True
    return mask


def analytic_angle(frame, u, radar=np.zeros(3)):
    to_radar = radar - frame.points
    to_radar /= np.linalg.norm(to_radar, axis=1, keepdims=True)
    return np.arccos(np.clip(np.einsum("ij,ij->i", u, to_radar), -1, 1))


def test_sphere_cap_against_analytic_normals():
    frame, u = sphere_frame()
    eps = np.deg2rad(7)
    acc = accepted_mask(frame, synthesize_signature(frame, epsilon=eps))
    ang = analytic_angle(frame, u)
    assert acc.any()
    assert np.all(ang[acc] < eps)
    # excluded points violate the test, up to one sample spacing at the rim
    spacing = np.sqrt(4 * np.pi / len(u))
    assert np.all(ang[~acc] >= eps - spacing)


def test_cap_half_angle_closed_form():
    r, dist = 0.3, 5.0
    frame, u = sphere_frame(20000, r, (0.0, dist, 0.0))
    eps = np.deg2rad(7)
    acc = accepted_mask(frame, synthesize_signature(frame, epsilon=eps))
    polar = np.arccos(-u[:, 1])              # angle from the sphere-to-radar axis
    # triangle centre/point/radar: sin(eps - theta) = (r / dist) sin(eps)
    theta = eps - np.arcsin(r / dist * np.sin(eps))
    spacing = np.sqrt(4 * np.pi / len(u))
    assert polar[acc].max() <= theta + spacing
    assert polar[~acc].min() >= theta - spacing


def test_cap_half_angle_tends_to_epsilon_far_away():
    frame, u = sphere_frame(20000, 0.3, (0.0, 300.0, 0.0))
    eps = np.deg2rad(10)
    acc = accepted_mask(frame, synthesize_signature(frame, epsilon=eps))
    polar = np.arccos(-u[:, 1])
    spacing = np.sqrt(4 * np.pi / len(u))
    assert abs(polar[acc].max() - eps) <= spacing + 1e-3


def test_epsilon_monotone_on_sphere():
    frame, _ = sphere_frame()
    masks = [accepted_mask(frame, synthesize_signature(frame, epsilon=np.deg2rad(e))) for e in (2, 7, 15, 30)]
    for small, big in zip(masks, masks[1:]):
        assert np.all(big[small])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 40.0), st.floats(0.5, 40.0))
def test_epsilon_monotone_on_body(seed, e1, e2):
    lo, hi = sorted((e1, e2))
    mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(duration=0.1), seed=seed, n_points=800)
    f = mesh.frames[0]
    a = accepted_mask(f, synthesize_signature(f, epsilon=np.deg2rad(lo)))
    b = accepted_mask(f, synthesize_signature(f, epsilon=np.deg2rad(hi)))
    assert np.all(b[a])


def test_plane_facing_away_is_empty():
    g = np.stack(np.meshgrid(np.linspace(-0.5, 0.5, 15), np.linspace(-0.5, 0.5, 15)), -1).reshape(-1, 2)
    pts = np.column_stack([g[:, 0], np.full(len(g), 5.0), g[:, 1]])
    # center in front of the plane so outward normals point away from the radar
    frame = MeshFrame(0.0, pts, np.zeros(len(pts), dtype=np.int8), np.array([0.0, 4.0, 0.0]))
    assert len(synthesize_signature(frame)) == 0


def test_point_with_normal_at_radar_accepted():
    assert specular_mask([[0.0, 5.0, 0.0]], [[0.0, -1.0, 0.0]], np.zeros(3), 1e-6)[0]


def test_signature_points_are_mesh_points_with_labels():
    mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(), seed=1, n_points=2000)
    for f, s in zip(mesh.frames, synthesize_sequence(mesh)):
        acc = accepted_mask(f, s)
        assert acc.sum() == len(s)
        # points keep mesh order, so labels line up one to one
        assert np.array_equal(f.points[acc], s.points)
        assert np.array_equal(f.parts[acc], s.parts)


def test_sequence_length_and_label_variation():
    mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(), seed=2, n_points=3000)
    sigs = synthesize_sequence(mesh)
    assert len(sigs) == 25
    label_sets = {frozenset(np.unique(s.parts).tolist()) for s in sigs}
    assert len(label_sets) > 1


def test_wide_epsilon_takes_facing_half():
    mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(duration=0.3), seed=3, n_points=3000)
    for f in mesh.frames:
        s = synthesize_signature(f, epsilon=np.deg2rad(89.9))
        assert len(s) >= 0.4 * len(f)


def test_too_few_points():
    f = MeshFrame(0.0, np.random.default_rng(0).normal(size=(6, 3)), np.zeros(6, dtype=np.int8), np.zeros(3))
    with pytest.raises(DegenerateNeighborhood):
        synthesize_signature(f)
    with pytest.raises(ValueError):
        synthesize_signature(sphere_frame(200)[0], epsilon=np.pi / 2)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    frame, _ = sphere_frame(1500)
    t = RigidTransform(random_rotation(rng), rng.normal(size=3))
    moved = MeshFrame(0.0, t.apply(frame.points), frame.parts, t.apply(frame.subject_center))
    a = synthesize_signature(frame, np.zeros(3))
    b = synthesize_signature(moved, t.apply(np.zeros(3)))
    assert len(a) == len(b)
    assert np.allclose(np.sort(t.apply(a.points), axis=0), np.sort(b.points, axis=0), atol=1e-9)


def test_trajectory_exact_line():
    frames = [np.array([[t, 0.0, 0.0]]) for t in np.linspace(0, 2, 6)]
    tr = estimate_trajectory(frames)
    assert np.allclose(tr.direction, [1, 0, 0], atol=1e-12)
    assert np.allclose(tr.origin, 0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-np.pi, np.pi))
def test_trajectory_noisy_line_against_svd_oracle(seed, heading):
    rng = np.random.default_rng(seed)
    d = np.array([np.cos(heading), np.sin(heading)])
    t = np.linspace(0, 2.5, 25)
    xy = t[:, None] * d + rng.normal(0, 0.03, size=(25, 2))
    frames = [np.array([[x, y, 0.1]]) for x, y in xy]
    tr = estimate_trajectory(frames)
    # total least squares via the covariance eigenvector, computed independently
    w, v = np.linalg.eigh(np.cov(xy.T))
    oracle = v[:, -1] * np.sign(v[:, -1] @ (xy[-1] - xy[0]))
    assert np.allclose(tr.direction[:2], oracle, atol=1e-9)
    assert np.degrees(np.arccos(min(1.0, tr.direction[:2] @ d))) < 5.0


def test_trajectory_stationary():
    with pytest.raises(SubjectStationary):
        estimate_trajectory([np.ones((3, 3))] * 10)
    with pytest.raises(SubjectStationary):
        estimate_trajectory([np.ones((3, 3)), np.zeros((0, 3))])


def walk_mesh():
    return synth_subject(GaitParams(), WalkSpec.toward_sensor(), seed=7, n_points=500)


def test_align_identity():
    mesh = walk_mesh()
    tr = estimate_trajectory([f.points for f in mesh.frames])
    tr = Trajectory(mesh.frames[0].points.mean(axis=0), tr.direction, tr.per_frame_centers)
    out = align_mesh_to_radar(mesh, tr)
    for a, b in zip(mesh.frames, out.frames):
        assert np.allclose(a.points, b.points, atol=1e-9)


def test_align_recovers_translation():
    mesh = walk_mesh()
    radar_tr = estimate_trajectory([f.points for f in mesh.frames])
    shifted = transform_mesh(mesh, RigidTransform(np.eye(3), [5.0, 0.0, 0.0]))
    out = align_mesh_to_radar(shifted, Trajectory(mesh.frames[0].points.mean(axis=0), radar_tr.direction,
                                                  radar_tr.per_frame_centers))
    for a, b in zip(mesh.frames, out.frames):
        assert np.allclose(a.points.mean(axis=0), b.points.mean(axis=0), atol=1e-9)


def test_align_recovers_rotation():
    mesh = walk_mesh()
    radar_tr = estimate_trajectory([f.points for f in mesh.frames])
    turned = transform_mesh(mesh, RigidTransform.about_z(np.deg2rad(30), [1.0, -2.0, 0.0]))
    out = align_mesh_to_radar(turned, radar_tr)
    got = estimate_trajectory([f.points for f in out.frames]).direction
    assert np.arccos(min(1.0, got @ radar_tr.direction)) < 1e-6


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-np.pi, np.pi))
def test_moved_signature_matches_moving_the_mesh(seed, yaw):
    mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(duration=0.5), seed=seed, n_points=1500)
    t = RigidTransform.about_z(yaw, [0.5, 1.0, 0.0])
    direct = synthesize_sequence(transform_mesh(mesh, t))
    cached = moved_signature(mesh, [frame_normals(f) for f in mesh.frames], t)
    for a, b in zip(direct, cached):
        if len(a) == len(b):
            assert np.allclose(a.points, b.points, atol=1e-9) and np.array_equal(a.parts, b.parts)
        else:
            # only a point sitting on the cone boundary may flip under rounding
            assert abs(len(a) - len(b)) <= 1
    traj = estimate_trajectory([f.points for f in mesh.frames])
    aligned = synthesize_sequence(align_mesh_to_radar(mesh, traj))
    via = moved_signature(mesh, [frame_normals(f) for f in mesh.frames], alignment_transform(mesh, traj))
    assert sum(len(f) for f in aligned) == sum(len(f) for f in via)
