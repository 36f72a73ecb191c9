"""Hot inner loops: all-points k-nearest neighbours and DBSCAN labelling.

Each kernel has a numba implementation and a pure-numpy fallback with
identical results.  The active backend is chosen once at import time from
the ``XREID_BACKEND`` environment variable (``numba`` or ``numpy``); numba
is the default when it can be imported.  Both implementations stay
importable (``knn_numba``/``knn_numpy`` etc.) so they can be benchmarked
and cross-checked side by side.
"""
from __future__ import annotations

import os

import numpy as np

NOISE = -1
CELL_SCALE = 0.6

_requested = os.environ.get("XREID_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"XREID_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


# ---------------------------------------------------------------------------
# k-nearest neighbours of every point within its own cloud
# ---------------------------------------------------------------------------

def knn_numpy(points: np.ndarray, k: int, chunk: int = 256) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    k = min(k, n)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        # stable sort keeps ascending index among equal distances
        out[start:stop] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def dbscan_numpy(points: np.ndarray, radius: float, min_pts: int) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
    adj = d2 <= radius * radius
    core = adj.sum(axis=1) >= min_pts
    if not core.any():
        return labels
    # min-label propagation over the core-core graph
    core_adj = adj & core[:, None] & core[None, :]
    big = n
    lab = np.where(core, np.arange(n), big)
    while True:
        cand = np.where(core_adj, lab[None, :], big).min(axis=1)
        new = np.where(core, np.minimum(lab, cand), big)
        if np.array_equal(new, lab):
            break
        lab = new
    roots = np.unique(lab[core])  # ascending smallest core index -> cluster id order
    remap = np.full(n + 1, NOISE, dtype=np.int64)
    remap[roots] = np.arange(roots.size)
    labels[core] = remap[lab[core]]
    border = ~core
    if border.any():
        nb = adj[border][:, core]
        core_labels = labels[core]
        cand = np.where(nb, core_labels[None, :], np.iinfo(np.int64).max).min(axis=1)
        cand[cand == np.iinfo(np.int64).max] = NOISE
        labels[border] = cand
    return labels


if HAVE_NUMBA:

    @njit(cache=True)
    def _insert(bd, bi, cnt, k, d, j):
        # keeps (distance, index) pairs sorted lexicographically
        if cnt < k:
            pos = cnt
            cnt += 1
        elif d < bd[k - 1] or (d == bd[k - 1] and j < bi[k - 1]):
            pos = k - 1
        else:
            return cnt
        while pos > 0 and (bd[pos - 1] > d or (bd[pos - 1] == d and bi[pos - 1] > j)):
            bd[pos] = bd[pos - 1]
            bi[pos] = bi[pos - 1]
            pos -= 1
        bd[pos] = d
        bi[pos] = j
        return cnt

    @njit(cache=True)
    def knn_numba(points, k):
        # uniform grid; visit cells ring by ring around each point and stop
        # once every unvisited cell is farther than the current k-th distance
        n = points.shape[0]
        if k > n:
            k = n
        out = np.empty((n, k), dtype=np.int64)
        if n == 0:
            return out
        lo = np.empty(3)
        span = np.empty(3)
        dims = np.empty(3, dtype=np.int64)
        for a in range(3):
            lo[a] = points[:, a].min()
            span[a] = points[:, a].max() - lo[a]
        widest = span.max()
        if widest <= 0.0:
            widest = 1.0
        vol = 1.0
        for a in range(3):
            vol *= max(span[a], 1e-3 * widest)
        cell = CELL_SCALE * (vol / n) ** (1.0 / 3.0)
        while True:
            for a in range(3):
                dims[a] = int(span[a] / cell) + 1
            if dims[0] * dims[1] * dims[2] <= 4 * n + 64:
                break
            cell *= 1.5
        cidx = np.empty((n, 3), dtype=np.int64)
        key = np.empty(n, dtype=np.int64)
        for i in range(n):
            for a in range(3):
                cidx[i, a] = min(int((points[i, a] - lo[a]) / cell), dims[a] - 1)
            key[i] = (cidx[i, 0] * dims[1] + cidx[i, 1]) * dims[2] + cidx[i, 2]
        order = np.argsort(key, kind="mergesort")
        n_cells = dims[0] * dims[1] * dims[2]
        start = np.zeros(n_cells + 1, dtype=np.int64)
        for i in range(n):
            start[key[i] + 1] += 1
        for c in range(n_cells):
            start[c + 1] += start[c]
        max_ring = max(dims[0], max(dims[1], dims[2]))
        bd = np.empty(k, dtype=np.float64)
        bi = np.empty(k, dtype=np.int64)
        for i in range(n):
            cnt = 0
            cx, cy, cz = cidx[i, 0], cidx[i, 1], cidx[i, 2]
            for r in range(max_ring + 1):
                for gx in range(max(cx - r, 0), min(cx + r, dims[0] - 1) + 1):
                    for gy in range(max(cy - r, 0), min(cy + r, dims[1] - 1) + 1):
                        # inside the shell's x/y faces only the two z caps are new
                        step = 1 if (abs(gx - cx) == r or abs(gy - cy) == r or r == 0) else 2 * r
                        for gz in range(cz - r, cz + r + 1, step):
                            if gz < 0 or gz >= dims[2]:
                                continue
                            c = (gx * dims[1] + gy) * dims[2] + gz
                            for m in range(start[c], start[c + 1]):
                                j = order[m]
                                dx = points[i, 0] - points[j, 0]
                                dy = points[i, 1] - points[j, 1]
                                dz = points[i, 2] - points[j, 2]
                                cnt = _insert(bd, bi, cnt, k, dx * dx + dy * dy + dz * dz, j)
                # distance from the point to the nearest face of the visited
                # block that still has cells beyond it
                reach = np.inf
                for a in range(3):
                    c_a = cidx[i, a]
                    if c_a - r > 0:
                        reach = min(reach, points[i, a] - (lo[a] + (c_a - r) * cell))
                    if c_a + r < dims[a] - 1:
                        reach = min(reach, lo[a] + (c_a + r + 1) * cell - points[i, a])
                if reach == np.inf or (cnt == k and bd[k - 1] < reach * reach):
                    break
            for m in range(k):
                out[i, m] = bi[m]
        return out

    @njit(cache=True)
    def _dbscan_kernel(points, radius, min_pts):
        n = points.shape[0]
        r2 = radius * radius
        labels = np.full(n, -1, dtype=np.int64)
        adj = np.zeros((n, n), dtype=np.bool_)
        for i in range(n):
            for j in range(n):
                dx = points[i, 0] - points[j, 0]
                dy = points[i, 1] - points[j, 1]
                dz = points[i, 2] - points[j, 2]
                if dx * dx + dy * dy + dz * dz <= r2:
                    adj[i, j] = True
        core = np.zeros(n, dtype=np.bool_)
        for i in range(n):
            c = 0
            for j in range(n):
                if adj[i, j]:
                    c += 1
            core[i] = c >= min_pts
        stack = np.empty(n, dtype=np.int64)
        cid = 0
        for i in range(n):
            if not core[i] or labels[i] != -1:
                continue
            labels[i] = cid
            top = 0
            stack[top] = i
            top += 1
            while top > 0:
                top -= 1
                p = stack[top]
                for q in range(n):
                    if adj[p, q] and core[q] and labels[q] == -1:
                        labels[q] = cid
                        stack[top] = q
                        top += 1
            cid += 1
        for i in range(n):
            if core[i]:
                continue
            best = -1
            for j in range(n):
                if adj[i, j] and core[j]:
                    if best == -1 or labels[j] < best:
                        best = labels[j]
            labels[i] = best
        return labels

    def dbscan_numba(points: np.ndarray, radius: float, min_pts: int) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        return _dbscan_kernel(pts, float(radius), int(min_pts))

else:  # pragma: no cover
    knn_numba = None
    dbscan_numba = None


def knn_all(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest points (self included) for every point.

    Rows are sorted by ascending distance; equal distances keep ascending
    index order.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if BACKEND == "numba":
        return knn_numba(pts, int(k))
    return knn_numpy(pts, int(k))


def dbscan_labels(points: np.ndarray, radius: float, min_pts: int) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if BACKEND == "numba":
        return dbscan_numba(pts, radius, min_pts)
    return dbscan_numpy(pts, radius, min_pts)
