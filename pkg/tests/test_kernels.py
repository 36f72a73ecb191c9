import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xreid import kernels
from xreid.gait import GaitParams, WalkSpec, synth_subject

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def brute_knn(pts, k):
    d = ((pts[:, None] - pts[None]) ** 2).sum(-1)
    return np.array([sorted(range(len(pts)), key=lambda j: (d[i, j], j))[:k] for i in range(len(pts))])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(1, 9), st.integers(0, 2**31 - 1), st.booleans())
def test_knn_numpy_matches_brute(n, k, seed, grid):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 3, size=(n, 3)).astype(float) if grid else rng.normal(size=(n, 3))
    assert np.array_equal(kernels.knn_numpy(pts, k), brute_knn(pts, min(k, n)))


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.integers(1, 9), st.integers(0, 2**31 - 1), st.sampled_from(["grid", "normal", "flat", "line"]))
def test_knn_backends_identical(n, k, seed, shape):
    rng = np.random.default_rng(seed)
    if shape == "grid":
        pts = rng.integers(0, 4, size=(n, 3)).astype(float)
    elif shape == "flat":
        pts = rng.normal(size=(n, 3)) * [1.0, 1.0, 0.0]
    elif shape == "line":
        pts = np.outer(rng.integers(0, 10, n), [1.0, 0.5, 0.0])
    else:
        pts = rng.normal(size=(n, 3))
    assert np.array_equal(kernels.knn_numba(pts, k), kernels.knn_numpy(pts, k))


@needs_numba
def test_knn_backends_on_body_mesh():
    mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(), seed=1, n_points=3000)
    pts = mesh.frames[4].points
    assert np.array_equal(kernels.knn_numba(pts, 7), kernels.knn_numpy(pts, 7))


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 120), st.floats(0.05, 1.0), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_dbscan_backends_identical(n, radius, min_pts, seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(n, 3))
    assert np.array_equal(kernels.dbscan_numba(pts, radius, min_pts), kernels.dbscan_numpy(pts, radius, min_pts))


def test_backend_flag_selects_numpy():
    env = dict(os.environ, XREID_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "from xreid import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_backend_flag_rejects_unknown():
    env = dict(os.environ, XREID_BACKEND="fortran")
    out = subprocess.run([sys.executable, "-c", "import xreid.kernels"], env=env, capture_output=True, text=True)
    assert out.returncode != 0
    assert "XREID_BACKEND" in out.stderr
