"""Two-branch metric network with hand-written reverse-mode gradients.

Per frame, a shared point MLP lifts every point to 64 features and an
attention layer pools them into one frame feature.  A 3-layer LSTM runs
over the frame features and a second attention layer pools its outputs
into the 64-d gait embedding.  Radar and signature branches have their own
MLP and point attention; the LSTM and frame attention are shared unless
``share_lstm`` is off.

All batch work is vectorised: points of every frame of every sequence in a
batch are stacked into one matrix, segment softmax uses ``reduceat`` over
frame offsets, and sequences are right-padded for the LSTM with the padded
steps masked out of the frame attention (so they receive no gradient).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFrame, EmptySequence, ShapeMismatch

HIDDEN = 64
MLP_SIZES = (12, 24, 48, 64)
LSTM_LAYERS = 3
N_PARTS = 6
RADAR_DIM = 5
SIG_DIM = 3 + N_PARTS
BRANCH_DIMS = {"radar": RADAR_DIM, "sig": SIG_DIM}
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ABLATIONS = ("full", "noST", "noAtt", "noTL")


@dataclass
class NetConfig:
    ablation: str = "full"
    share_lstm: bool = True
    radar_max_points: int = 64
    sig_max_points: int = 256

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")

    @property
    def attention(self) -> bool:
        return self.ablation != "noAtt"


def is_stat(name: str) -> bool:
    return name.endswith(".mean") or name.endswith(".var")


def lstm_prefix(branch: str, share: bool) -> str:
    return "" if share else f"{branch}."


def param_shapes(share_lstm: bool = True) -> dict:
    shapes = {}
    for br, d_in in BRANCH_DIMS.items():
        sizes = (d_in,) + MLP_SIZES
        for l in range(len(MLP_SIZES)):
            shapes[f"{br}.mlp{l}.W"] = (sizes[l], sizes[l + 1])
            shapes[f"{br}.mlp{l}.b"] = (sizes[l + 1],)
            shapes[f"{br}.mlp{l}.mean"] = (sizes[l + 1],)
            shapes[f"{br}.mlp{l}.var"] = (sizes[l + 1],)
        shapes[f"{br}.attn.w"] = (HIDDEN,)
        shapes[f"{br}.attn.b"] = (1,)
    prefixes = [""] if share_lstm else ["radar.", "sig."]
    for p in prefixes:
        for l in range(LSTM_LAYERS):
            shapes[f"{p}lstm{l}.W"] = (2 * HIDDEN, 4 * HIDDEN)
            shapes[f"{p}lstm{l}.b"] = (4 * HIDDEN,)
    shapes["frame_attn.w"] = (HIDDEN,)
    shapes["frame_attn.b"] = (1,)
    return shapes


def init_params(seed: int, share_lstm: bool = True) -> dict:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; unit-variance stats."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x1417]))
    params = {}
    for name, shape in param_shapes(share_lstm).items():
        if name.endswith(".mean"):
            params[name] = np.zeros(shape)
        elif name.endswith(".var"):
            params[name] = np.ones(shape)
        else:
            layer = name.rsplit(".", 1)[0]
            w_shape = param_shapes(share_lstm).get(layer + ".W") or param_shapes(share_lstm)[layer + ".w"]
            fan_in = w_shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def check_params(params: dict, share_lstm: bool = True) -> None:
    shapes = param_shapes(share_lstm)
    if set(params) != set(shapes):
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        raise ShapeMismatch(f"parameter names differ; missing={missing} extra={extra}")
    for name, shape in shapes.items():
        if tuple(params[name].shape) != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")
        if not np.all(np.isfinite(params[name])):
            raise ShapeMismatch(f"{name}: non-finite values")


# ---------------------------------------------------------------------------
# input features
# ---------------------------------------------------------------------------

def radar_features(points: np.ndarray, max_points: int = 64) -> np.ndarray:
    """(x, y, z, intensity, velocity) rows, clipped to the strongest ``max_points``.

    Rows are put in a canonical order first so the result depends only on
    the set of points, not on their input order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, RADAR_DIM)
    if pts.shape[0] == 0:
        return pts
    pts = pts[np.lexsort(pts.T[::-1])]
    order = np.argsort(-pts[:, 3], kind="stable")[:max_points]
    return pts[np.sort(order)]


def signature_features(points: np.ndarray, parts: np.ndarray, max_points: int = 256) -> np.ndarray:
    """xyz plus a one-hot body part, evenly subsampled to at most ``max_points``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    parts = np.asarray(parts).reshape(-1).astype(np.int64)
    if pts.shape[0] != parts.shape[0]:
        raise ShapeMismatch("points and parts differ in length")
    if pts.shape[0] == 0:
        return np.zeros((0, SIG_DIM))
    order = np.lexsort((parts, pts[:, 2], pts[:, 1], pts[:, 0]))
    pts, parts = pts[order], parts[order]
    if pts.shape[0] > max_points:
        pick = np.unique(np.round(np.linspace(0, pts.shape[0] - 1, max_points)).astype(np.int64))
        pts, parts = pts[pick], parts[pick]
    onehot = np.zeros((pts.shape[0], N_PARTS))
    onehot[np.arange(pts.shape[0]), parts] = 1.0
    return np.hstack([pts, onehot])


def drop_empty(frames: list) -> list:
    seq = [f for f in frames if f.shape[0] > 0]
    if not seq:
        raise EmptySequence("sequence has no non-empty frame")
    return seq


# ---------------------------------------------------------------------------
# building blocks (single-instance forms, used directly and in tests)
# ---------------------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def point_mlp(features: np.ndarray, branch: str, params: dict) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(-1, x.shape[-1])
    if x.shape[1] != BRANCH_DIMS[branch]:
        raise ShapeMismatch(f"{branch} features must have {BRANCH_DIMS[branch]} columns, got {x.shape[1]}")
    out, _ = _mlp_forward(params, branch, x, None)
    return out[0] if single else out


def attention_pool(features: np.ndarray, w: np.ndarray, b) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise EmptyFrame("attention pooling needs at least one feature row")
    s = feats @ w + np.asarray(b).reshape(-1)[0]
    a = np.exp(s - s.max())
    a /= a.sum()
    return a @ feats


def sequence_attention(hidden: np.ndarray, params: dict) -> np.ndarray:
    return attention_pool(hidden, params["frame_attn.w"], params["frame_attn.b"])


def lstm_forward(frame_features: np.ndarray, params: dict, prefix: str = "") -> np.ndarray:
    x = np.asarray(frame_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != HIDDEN or x.shape[0] == 0:
        raise ShapeMismatch(f"expected (L>=1, {HIDDEN}) frame features, got {x.shape}")
    hs, _ = _lstm_forward(params, prefix, x[None])
    return hs[0]


# ---------------------------------------------------------------------------
# batched forward / backward
# ---------------------------------------------------------------------------

def _mlp_forward(params, br, x, momentum):
    # normalisation is folded into the affine map; the ReLU output doubles as the mask
    a = x
    acts = [x]
    scales = []
    for l in range(len(MLP_SIZES)):
        key = f"{br}.mlp{l}"
        z = a @ params[key + ".W"]
        if momentum is not None:
            n_rows = z.shape[0]
            mu = z.sum(axis=0) / n_rows
            var = np.maximum(np.einsum("ij,ij->j", z, z) / n_rows - mu * mu, 0.0)
            params[key + ".mean"] = (1 - momentum) * params[key + ".mean"] + momentum * (mu + params[key + ".b"])
            params[key + ".var"] = (1 - momentum) * params[key + ".var"] + momentum * var
        inv = 1.0 / np.sqrt(params[key + ".var"] + BN_EPS)
        z *= inv
        z += (params[key + ".b"] - params[key + ".mean"]) * inv
        np.maximum(z, 0.0, out=z)
        scales.append(inv)
        acts.append(z)
        a = z
    return a, (acts, scales)


def _mlp_backward(params, br, cache, d_out, grads):
    acts, scales = cache
    d = d_out
    for l in reversed(range(len(MLP_SIZES))):
        key = f"{br}.mlp{l}"
        dz = np.where(acts[l + 1] > 0, d, 0.0)
        dz *= scales[l]
        grads[key + ".W"] = grads.get(key + ".W", 0.0) + acts[l].T @ dz
        grads[key + ".b"] = grads.get(key + ".b", 0.0) + dz.sum(axis=0)
        if l:
            d = dz @ params[key + ".W"].T


def _segment_softmax_pool(m, starts, w, b):
    s = m @ w + b[0]
    seg_max = np.maximum.reduceat(s, starts)
    counts = np.diff(np.append(starts, m.shape[0]))
    e = np.exp(s - np.repeat(seg_max, counts))
    alpha = e / np.repeat(np.add.reduceat(e, starts), counts)
    return np.add.reduceat(alpha[:, None] * m, starts, axis=0), (alpha, counts)


def _segment_softmax_backward(m, starts, w, cache, d_pooled):
    alpha, counts = cache
    d_rows = np.repeat(d_pooled, counts, axis=0)
    d_alpha = np.einsum("ij,ij->i", d_rows, m)
    inner = np.repeat(np.add.reduceat(alpha * d_alpha, starts), counts)
    ds = alpha * (d_alpha - inner)
    dm = alpha[:, None] * d_rows + ds[:, None] * w[None, :]
    return dm, m.T @ ds, np.array([ds.sum()])


def _segment_max_pool(m, starts):
    pooled = np.maximum.reduceat(m, starts, axis=0)
    counts = np.diff(np.append(starts, m.shape[0]))
    hit = m == np.repeat(pooled, counts, axis=0)
    # first row attaining the max in each segment and column gets the gradient
    rows = np.where(hit, np.arange(m.shape[0])[:, None], m.shape[0])
    arg = np.minimum.reduceat(rows, starts, axis=0)
    return pooled, arg


def _lstm_forward(params, prefix, x, lengths=None):
    s_n, l_n, _ = x.shape
    h_n = HIDDEN
    inp = x
    caches = []
    for l in range(LSTM_LAYERS):
        w = params[f"{prefix}lstm{l}.W"]
        b = params[f"{prefix}lstm{l}.b"]
        d_in = inp.shape[2]
        wx, wh = w[:d_in], w[d_in:]
        xw = inp @ wx + b
        h = np.zeros((s_n, h_n))
        c = np.zeros((s_n, h_n))
        gates = np.empty((s_n, l_n, 4 * h_n))
        cs = np.empty((s_n, l_n, h_n))
        tcs = np.empty((s_n, l_n, h_n))
        hs = np.empty((s_n, l_n, h_n))
        for t in range(l_n):
            g = xw[:, t] + h @ wh
            ifo = _sigmoid(g[:, np.r_[0:2 * h_n, 3 * h_n:4 * h_n]])
            i, f, o = ifo[:, :h_n], ifo[:, h_n:2 * h_n], ifo[:, 2 * h_n:]
            gg = np.tanh(g[:, 2 * h_n:3 * h_n])
            c = f * c + i * gg
            tc = np.tanh(c)
            h = o * tc
            gates[:, t, :h_n] = i
            gates[:, t, h_n:2 * h_n] = f
            gates[:, t, 2 * h_n:3 * h_n] = gg
            gates[:, t, 3 * h_n:] = o
            cs[:, t] = c
            tcs[:, t] = tc
            hs[:, t] = h
        caches.append((inp, gates, cs, tcs, hs))
        inp = hs
    return inp, caches


def _lstm_backward(params, prefix, caches, d_top, grads):
    d_in_seq = d_top
    h_n = HIDDEN
    for l in reversed(range(LSTM_LAYERS)):
        inp, gates, cs, tcs, hs = caches[l]
        s_n, l_n, d_in = inp.shape
        w = params[f"{prefix}lstm{l}.W"]
        wx, wh = w[:d_in], w[d_in:]
        dgates = np.empty_like(gates)
        dh_next = np.zeros((s_n, h_n))
        dc_next = np.zeros((s_n, h_n))
        for t in reversed(range(l_n)):
            i = gates[:, t, :h_n]
            f = gates[:, t, h_n:2 * h_n]
            gg = gates[:, t, 2 * h_n:3 * h_n]
            o = gates[:, t, 3 * h_n:]
            tc = tcs[:, t]
            dh = d_in_seq[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            c_prev = cs[:, t - 1] if t else 0.0
            dg = dgates[:, t]
            dg[:, :h_n] = dc * gg * i * (1.0 - i)
            dg[:, h_n:2 * h_n] = dc * c_prev * f * (1.0 - f)
            dg[:, 2 * h_n:3 * h_n] = dc * i * (1.0 - gg * gg)
            dg[:, 3 * h_n:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dg @ wh.T
        h_prev = np.concatenate([np.zeros((s_n, 1, h_n)), hs[:, :-1]], axis=1)
        flat_g = dgates.reshape(-1, 4 * h_n)
        dw = np.vstack([inp.reshape(-1, d_in).T @ flat_g, h_prev.reshape(-1, h_n).T @ flat_g])
        grads[f"{prefix}lstm{l}.W"] = grads.get(f"{prefix}lstm{l}.W", 0.0) + dw
        grads[f"{prefix}lstm{l}.b"] = grads.get(f"{prefix}lstm{l}.b", 0.0) + flat_g.sum(axis=0)
        d_in_seq = dgates @ wx.T
    return d_in_seq


def _masked_frame_pool(hs, lengths, params, attention):
    s_n, l_n, _ = hs.shape
    mask = np.arange(l_n)[None, :] < lengths[:, None]
    if attention:
        s = hs @ params["frame_attn.w"] + params["frame_attn.b"][0]
        s = np.where(mask, s, -np.inf)
        e = np.exp(s - s.max(axis=1, keepdims=True))
        alpha = e / e.sum(axis=1, keepdims=True)
        return np.einsum("sl,slh->sh", alpha, hs), alpha
    masked = np.where(mask[:, :, None], hs, -np.inf)
    pooled = masked.max(axis=1)
    arg = np.argmax(masked, axis=1)     # first maximiser
    return pooled, arg


def _masked_frame_pool_backward(hs, params, cache, d_g, attention, grads):
    if attention:
        alpha = cache
        d_alpha = np.einsum("sh,slh->sl", d_g, hs)
        ds = alpha * (d_alpha - (alpha * d_alpha).sum(axis=1, keepdims=True))
        grads["frame_attn.w"] = grads.get("frame_attn.w", 0.0) + np.einsum("sl,slh->h", ds, hs)
        grads["frame_attn.b"] = grads.get("frame_attn.b", 0.0) + np.array([ds.sum()])
        return alpha[:, :, None] * d_g[:, None, :] + ds[:, :, None] * params["frame_attn.w"]
    arg = cache
    d_hs = np.zeros_like(hs)
    s_idx = np.arange(hs.shape[0])[:, None]
    h_idx = np.arange(hs.shape[2])[None, :]
    d_hs[s_idx, arg, h_idx] = d_g
    return d_hs


class MetricNet:
    """Parameters plus the forward/backward passes over batches of sequences.

    Sequences are lists of per-frame feature matrices (see
    :func:`radar_features` / :func:`signature_features`); empty frames must
    already be dropped.
    """

    def __init__(self, params: dict | None = None, config: NetConfig | None = None, seed: int = 0):
        self.config = config or NetConfig()
        self.params = params if params is not None else init_params(seed, self.config.share_lstm)
        check_params(self.params, self.config.share_lstm)

    # -- front end --------------------------------------------------------
    def _front(self, br, seqs, momentum):
        frames = [f for s in seqs for f in s]
        counts = np.array([f.shape[0] for f in frames])
        if counts.size == 0 or (counts == 0).any():
            raise EmptyFrame("empty frames must be dropped before encoding")
        x = np.concatenate(frames)
        if x.shape[1] != BRANCH_DIMS[br]:
            raise ShapeMismatch(f"{br} features must have {BRANCH_DIMS[br]} columns, got {x.shape[1]}")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        m, mlp_cache = _mlp_forward(self.params, br, x, momentum)
        if self.config.attention:
            pooled, pool_cache = _segment_softmax_pool(m, starts, self.params[f"{br}.attn.w"],
                                                       self.params[f"{br}.attn.b"])
        else:
            pooled, pool_cache = _segment_max_pool(m, starts)
        lengths = np.array([len(s) for s in seqs])
        seq_idx = np.repeat(np.arange(len(seqs)), lengths)
        pos_idx = np.concatenate([np.arange(n) for n in lengths])
        return pooled, lengths, seq_idx, pos_idx, (x, starts, m, mlp_cache, pool_cache)

    def _front_backward(self, br, cache, d_pooled, grads):
        x, starts, m, mlp_cache, pool_cache = cache
        if self.config.attention:
            dm, dw, db = _segment_softmax_backward(m, starts, self.params[f"{br}.attn.w"], pool_cache, d_pooled)
            grads[f"{br}.attn.w"] = grads.get(f"{br}.attn.w", 0.0) + dw
            grads[f"{br}.attn.b"] = grads.get(f"{br}.attn.b", 0.0) + db
        else:
            dm = np.zeros_like(m)
            cols = np.arange(m.shape[1])[None, :]
            np.add.at(dm, (pool_cache, np.broadcast_to(cols, pool_cache.shape)), d_pooled)
        _mlp_backward(self.params, br, mlp_cache, dm, grads)

    # -- whole network ----------------------------------------------------
    def forward(self, radar_seqs=(), sig_seqs=(), momentum: float | None = None):
        """Embed batches of radar and signature sequences.

        Returns ``(G_radar, G_sig, cache)``.  With ``momentum`` set, the
        normalisation statistics are first moved toward the batch statistics
        (training mode); they are constants for the gradient either way.
        """
        groups = [(br, list(s)) for br, s in (("radar", radar_seqs), ("sig", sig_seqs)) if len(s)]
        fronts = {br: self._front(br, seqs, momentum) for br, seqs in groups}
        share = self.config.share_lstm
        runs = [[br for br, _ in groups]] if share else [[br] for br, _ in groups]
        out = {}
        cache = {"fronts": fronts, "runs": []}
        for run in runs:
            if not run:
                continue
            sizes = [len(fronts[br][1]) for br in run]
            lengths = np.concatenate([fronts[br][1] for br in run])
            l_max = int(lengths.max())
            x = np.zeros((lengths.size, l_max, HIDDEN))
            offset = 0
            for br, n in zip(run, sizes):
                pooled, _, seq_idx, pos_idx, _ = fronts[br]
                x[seq_idx + offset, pos_idx] = pooled
                offset += n
            prefix = "" if share else f"{run[0]}."
            hs, lstm_cache = _lstm_forward(self.params, prefix, x)
            g, pool_cache = _masked_frame_pool(hs, lengths, self.params, self.config.attention)
            offset = 0
            for br, n in zip(run, sizes):
                out[br] = g[offset:offset + n]
                offset += n
            cache["runs"].append((run, sizes, prefix, hs, lstm_cache, pool_cache))
        empty = np.zeros((0, HIDDEN))
        return out.get("radar", empty), out.get("sig", empty), cache

    def backward(self, cache, d_radar=None, d_sig=None) -> dict:
        grads: dict = {}
        d_by_branch = {"radar": d_radar, "sig": d_sig}
        fronts = cache["fronts"]
        for run, sizes, prefix, hs, lstm_cache, pool_cache in cache["runs"]:
            d_g = np.vstack([d_by_branch[br] if d_by_branch[br] is not None else np.zeros((n, HIDDEN))
                             for br, n in zip(run, sizes)])
            d_hs = _masked_frame_pool_backward(hs, self.params, pool_cache, d_g, self.config.attention, grads)
            d_x = _lstm_backward(self.params, prefix, lstm_cache, d_hs, grads)
            offset = 0
            for br, n in zip(run, sizes):
                _, _, seq_idx, pos_idx, front_cache = fronts[br]
                self._front_backward(br, front_cache, d_x[seq_idx + offset, pos_idx], grads)
                offset += n
        return grads

    # -- conveniences -----------------------------------------------------
    def encode_radar(self, frames) -> np.ndarray:
        """Embed one radar sequence given as a list of ``RadarFrame`` or (n, 5) arrays."""
        seq = drop_empty([radar_features(getattr(f, "points", f), self.config.radar_max_points)
                          for f in frames])
        return self.forward(radar_seqs=[seq])[0][0]

    def encode_signature(self, frames) -> np.ndarray:
        """Embed one signature (or raw-mesh) sequence of frames with ``points`` and ``parts``."""
        seq = drop_empty([signature_features(f.points, f.parts, self.config.sig_max_points)
                          for f in frames])
        return self.forward(sig_seqs=[seq])[1][0]

    def embed_many(self, branch: str, seqs: list, batch: int = 64) -> np.ndarray:
        out = []
        for i in range(0, len(seqs), batch):
            chunk = seqs[i:i + batch]
            if branch == "radar":
                out.append(self.forward(radar_seqs=chunk)[0])
            else:
                out.append(self.forward(sig_seqs=chunk)[1])
        return np.vstack(out) if out else np.zeros((0, HIDDEN))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _dist_and_unit(a, b):
    diff = a - b
    d = np.linalg.norm(diff, axis=-1)
    safe = np.where(d > 0, d, 1.0)
    return d, np.where((d > 0)[..., None], diff / safe[..., None], 0.0)


def triplet_loss(g_a, g_p, g_n, margin: float = 0.3) -> float:
    if margin <= 0:
        raise ValueError("margin must be > 0")
    d_ap = np.linalg.norm(np.asarray(g_a) - np.asarray(g_p))
    d_an = np.linalg.norm(np.asarray(g_a) - np.asarray(g_n))
    return float(max(d_ap + margin - d_an, 0.0))


def triplet_loss_batch(g_a, g_p, g_n, margin: float):
    """Mean triplet loss over rows and its gradients w.r.t. each input."""
    d_ap, u_ap = _dist_and_unit(g_a, g_p)
    d_an, u_an = _dist_and_unit(g_a, g_n)
    raw = d_ap + margin - d_an
    active = (raw > 0).astype(np.float64)[:, None]
    b = g_a.shape[0]
    dga = active * (u_ap - u_an) / b
    dgp = -active * u_ap / b
    dgn = active * u_an / b
    return float(np.maximum(raw, 0.0).mean()), dga, dgp, dgn


def contrastive_loss(g_a, g_b, y: int, margin_c: float = 0.3) -> float:
    if margin_c <= 0:
        raise ValueError("margin_c must be > 0")
    d = float(np.linalg.norm(np.asarray(g_a) - np.asarray(g_b)))
    return y * d * d + (1 - y) * max(margin_c - d, 0.0) ** 2


def contrastive_loss_batch(g_a, g_b, y, margin_c: float):
    y = np.asarray(y, dtype=np.float64)
    d, u = _dist_and_unit(g_a, g_b)
    hinge = np.maximum(margin_c - d, 0.0)
    loss = y * d * d + (1 - y) * hinge * hinge
    coef = (2 * y * d - 2 * (1 - y) * hinge) / g_a.shape[0]
    dga = coef[:, None] * u
    return float(loss.mean()), dga, -dga


def similarity(g1, g2) -> float:
    return -float(np.linalg.norm(np.asarray(g1) - np.asarray(g2)))
