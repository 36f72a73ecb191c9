"""Flat ``key = value`` run configuration with namespaced keys."""
from __future__ import annotations

import hashlib
from pathlib import Path

from .dataset import SimConfig
from .errors import ConfigError
from .radar import NoiseParams, RadarConfig
from .train import TrainConfig

DEFAULTS = {
    "sim.identities": 20,
    "sim.walks": 10,
    "sim.frames": 25,
    "sim.mesh_points": 5000,
    "sim.seed": 0,
    "sim.start_distance_min": 6.0,
    "sim.start_distance_max": 6.6,
    "sim.lateral_jitter": 0.15,
    "sim.walk_variation": 0.02,
    "sim.physical_epsilon": 7.0,
    "sim.view_angle": 0.0,
    "radar.ghost_rate": 1.0,
    "radar.position_sigma": 0.02,
    "radar.dropout_prob": 0.1,
    "radar.max_points": 64,
    "sig.epsilon": 7.0,
    "train.learning_rate": 2e-4,
    "train.batch_size": 32,
    "train.epochs": 2000,
    "train.margin": 0.3,
    "train.contrastive_margin": 0.3,
    "train.ablation": "full",
    "train.share_lstm": True,
    "eval.scorer": "model",
    "eval.delta": 0.0,
    "eval.sweep": "frame_count",
    "eval.grid": "5,10,25",
    "eval.feasibility_identities": 10,
    "eval.feasibility_walks": 2,
    "io.out": "out",
    "io.threads": 1,
}


def _coerce(key: str, raw):
    default = DEFAULTS[key]
    text = raw.strip() if isinstance(raw, str) else _text(raw)
    try:
        if isinstance(default, bool):
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


class RunConfig:
    """Resolved configuration: defaults, then a config file, then overrides."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value)

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        values = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{source}:{n}: unknown config key {key!r}")
            values[key] = value
        return cls(values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.parse(text, str(path))

    def dump(self) -> str:
        return "".join(f"{k} = {_text(v)}\n" for k, v in sorted(self.values.items()))

    def result_items(self) -> list:
        # io.* only says where and how fast to write; it never changes a result
        return [(k, v) for k, v in sorted(self.values.items()) if not k.startswith("io.")]

    def hash(self) -> str:
        text = "".join(f"{k} = {_text(v)}\n" for k, v in self.result_items())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return self["sim.seed"]

    def metadata(self) -> dict:
        return {"config_hash": self.hash(), "seed": self.seed,
                "config": ";".join(f"{k}={_text(v)}" for k, v in self.result_items())}

    # typed views ----------------------------------------------------------
    def sim(self) -> SimConfig:
        return SimConfig(identities=self["sim.identities"], walks=self["sim.walks"], frames=self["sim.frames"],
                         mesh_points=self["sim.mesh_points"],
                         start_distance=(self["sim.start_distance_min"], self["sim.start_distance_max"]),
                         lateral_jitter=self["sim.lateral_jitter"], walk_variation=self["sim.walk_variation"],
                         physical_epsilon_deg=self["sim.physical_epsilon"], epsilon_deg=self["sig.epsilon"],
                         view_angle_deg=self["sim.view_angle"], seed=self.seed)

    def radar(self) -> RadarConfig:
        return RadarConfig(max_points_per_frame=self["radar.max_points"])

    def noise(self) -> NoiseParams:
        n = NoiseParams(ghost_rate=self["radar.ghost_rate"], position_sigma=self["radar.position_sigma"],
                        dropout_prob=self["radar.dropout_prob"])
        n.validate()
        return n

    def train(self) -> TrainConfig:
        return TrainConfig(learning_rate=self["train.learning_rate"], batch_size=self["train.batch_size"],
                           epochs=self["train.epochs"], margin=self["train.margin"],
                           contrastive_margin=self["train.contrastive_margin"], seed=self.seed,
                           ablation=self["train.ablation"], share_lstm=self["train.share_lstm"]).validate()

    def grid(self) -> list:
        try:
            return [float(v) for v in str(self["eval.grid"]).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"eval.grid: cannot parse {self['eval.grid']!r}") from None


def _text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
