"""Triplet (or contrastive) training of :class:`MetricNet` with Adam."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientIdentities
from .net import BN_MOMENTUM, MetricNet, NetConfig, contrastive_loss_batch, is_stat, triplet_loss_batch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 32
    epochs: int = 2000
    margin: float = 0.3
    contrastive_margin: float = 0.3
    seed: int = 0
    ablation: str = "full"
    share_lstm: bool = True

    def validate(self) -> "TrainConfig":
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.margin > 0 or not self.contrastive_margin > 0:
            raise ValueError("margins must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        NetConfig(ablation=self.ablation)
        return self

    def net_config(self) -> NetConfig:
        return NetConfig(ablation=self.ablation, share_lstm=self.share_lstm)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TripletSource:
    """Featurised training sequences: radar anchors and signature candidates.

    ``radar[i]`` / ``sig[j]`` are lists of per-frame feature matrices with
    empty frames already removed.
    """
    radar: list
    radar_ids: np.ndarray
    sig: list
    sig_ids: np.ndarray

    def __post_init__(self):
        self.radar_ids = np.asarray(self.radar_ids, dtype=np.int64)
        self.sig_ids = np.asarray(self.sig_ids, dtype=np.int64)
        if len(self.radar) != self.radar_ids.size or len(self.sig) != self.sig_ids.size:
            raise ValueError("sequence and id counts differ")


@dataclass
class TrainResult:
    model: MetricNet
    loss_trace: list = field(default_factory=list)
    config: TrainConfig | None = None

    @property
    def params(self) -> dict:
        return self.model.params


class _Sampler:
    def __init__(self, source: TripletSource):
        sig_ids = source.sig_ids
        ids = np.unique(sig_ids)
        if ids.size < 2:
            raise InsufficientIdentities("need signatures from at least 2 identities")
        self.positives = {int(i): np.flatnonzero(sig_ids == i) for i in ids}
        self.negatives = {int(i): np.flatnonzero(sig_ids != i) for i in ids}
        self.anchors = np.flatnonzero(np.isin(source.radar_ids, ids))
        if np.unique(source.radar_ids[self.anchors]).size < 2:
            raise InsufficientIdentities("need radar sequences from at least 2 identities with signatures")
        self.radar_ids = source.radar_ids

    def sample(self, rng, batch: int):
        a = self.anchors[rng.integers(self.anchors.size, size=batch)]
        p = np.empty(batch, dtype=np.int64)
        n = np.empty(batch, dtype=np.int64)
        for k, idx in enumerate(a):
            pid = int(self.radar_ids[idx])
            pos, neg = self.positives[pid], self.negatives[pid]
            p[k] = pos[rng.integers(pos.size)]
            n[k] = neg[rng.integers(neg.size)]
        return a, p, n


def batch_loss(model: MetricNet, source: TripletSource, a, p, n, cfg: TrainConfig, momentum=None):
    """Loss of one batch of index triplets and its parameter gradients."""
    ua, ia = np.unique(a, return_inverse=True)
    us, is_ = np.unique(np.concatenate([p, n]), return_inverse=True)
    ip, in_ = is_[: p.size], is_[p.size:]
    g_r, g_s, cache = model.forward([source.radar[i] for i in ua], [source.sig[j] for j in us], momentum)
    d_r = np.zeros_like(g_r)
    d_s = np.zeros_like(g_s)
    if cfg.ablation == "noTL":
        anchors = np.vstack([g_r[ia], g_r[ia]])
        others = np.vstack([g_s[ip], g_s[in_]])
        y = np.concatenate([np.ones(a.size), np.zeros(a.size)])
        loss, da, db = contrastive_loss_batch(anchors, others, y, cfg.contrastive_margin)
        np.add.at(d_r, np.concatenate([ia, ia]), da)
        np.add.at(d_s, np.concatenate([ip, in_]), db)
    else:
        loss, da, dp, dn = triplet_loss_batch(g_r[ia], g_s[ip], g_s[in_], cfg.margin)
        np.add.at(d_r, ia, da)
        np.add.at(d_s, ip, dp)
        np.add.at(d_s, in_, dn)
    return loss, model.backward(cache, d_r, d_s)


def train(source: TripletSource, cfg: TrainConfig | None = None, progress=None) -> TrainResult:
    """Train from scratch; a pure function of ``(source, cfg)``.

    One epoch is one mini-batch of ``batch_size`` uniformly sampled
    triplets.  The normalisation statistics are set from the first batch and
    then tracked with an exponential moving average.
    """
    cfg = (cfg or TrainConfig()).validate()
    sampler = _Sampler(source)
    model = MetricNet(config=cfg.net_config(), seed=cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFF, 0x7A1]))
    names = [k for k in model.params if not is_stat(k)]
    m1 = {k: np.zeros_like(model.params[k]) for k in names}
    m2 = {k: np.zeros_like(model.params[k]) for k in names}
    trace = []
    for epoch in range(cfg.epochs):
        a, p, n = sampler.sample(rng, cfg.batch_size)
        momentum = 1.0 if epoch == 0 else BN_MOMENTUM
        loss, grads = batch_loss(model, source, a, p, n, cfg, momentum)
        t = epoch + 1
        c1 = 1.0 - ADAM_BETA1 ** t
        c2 = 1.0 - ADAM_BETA2 ** t
        for k in names:
            g = grads.get(k)
            if g is None:
                g = 0.0
            m1[k] = ADAM_BETA1 * m1[k] + (1 - ADAM_BETA1) * g
            m2[k] = ADAM_BETA2 * m2[k] + (1 - ADAM_BETA2) * g * g
            model.params[k] = model.params[k] - cfg.learning_rate * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + ADAM_EPS)
        trace.append(loss)
        if progress is not None:
            progress(epoch, loss)
    return TrainResult(model=model, loss_trace=trace, config=cfg)


def mean_triplet_loss(model: MetricNet, source: TripletSource, margin: float) -> float:
    """Mean triplet loss over every (anchor, positive, negative) combination."""
    g_r = model.embed_many("radar", source.radar)
    g_s = model.embed_many("sig", source.sig)
    d = np.linalg.norm(g_r[:, None, :] - g_s[None, :, :], axis=2)
    same = source.radar_ids[:, None] == source.sig_ids[None, :]
    total, count = 0.0, 0
    for i in range(g_r.shape[0]):
        dp = d[i, same[i]]
        dn = d[i, ~same[i]]
        if dp.size and dn.size:
            total += np.maximum(dp[:, None] + margin - dn[None, :], 0.0).sum()
            count += dp.size * dn.size
    return total / count if count else 0.0
