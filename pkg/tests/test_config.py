import pytest

from xreid.config import DEFAULTS, RunConfig
from xreid.errors import ConfigError


def test_defaults_resolve():
    cfg = RunConfig()
    assert cfg.sim().identities == 20 and cfg.train().epochs == 2000
    assert cfg.train().learning_rate == 2e-4
    cfg.noise()
    cfg.radar().validate()


def test_parse_comments_and_types():
    cfg = RunConfig.parse("# header\nsim.identities = 4   # four\ntrain.share_lstm = false\n\nsig.epsilon=15\n")
    assert cfg["sim.identities"] == 4 and cfg["train.share_lstm"] is False and cfg["sig.epsilon"] == 15.0


def test_unknown_and_malformed_keys():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.parse("sim.nonsense = 1")
    with pytest.raises(ConfigError, match="<config>:2"):
        RunConfig.parse("sim.seed = 1\njust words")
    with pytest.raises(ConfigError):
        RunConfig().set("sim.identities", "many")
    with pytest.raises(ConfigError):
        RunConfig().set("io.bogus", 1)


def test_dump_round_trip_and_hash(tmp_path):
    cfg = RunConfig({"sim.seed": 9, "train.ablation": "noTL"})
    p = tmp_path / "run.cfg"
    p.write_text(cfg.dump())
    back = RunConfig.load(p)
    assert back.values == cfg.values and back.hash() == cfg.hash()
    assert RunConfig().hash() != cfg.hash()
    meta = cfg.metadata()
    assert meta["seed"] == 9 and "train.ablation=noTL" in meta["config"]
    assert {k for k in DEFAULTS if not k.startswith("io.")} == {kv.split("=")[0] for kv in meta["config"].split(";")}
    # output location does not change the hash
    assert RunConfig({"sim.seed": 9, "train.ablation": "noTL", "io.out": "elsewhere"}).hash() == cfg.hash()


def test_missing_file():
    with pytest.raises(ConfigError, match="absent.cfg"):
        RunConfig.load("/nonexistent/absent.cfg")


def test_typed_views_validate():
    with pytest.raises(ValueError):
        RunConfig({"radar.dropout_prob": 1.5}).noise()
    with pytest.raises((ValueError, ConfigError)):
        RunConfig({"train.ablation": "bogus"}).train()
    assert RunConfig({"eval.grid": "2, 7,30"}).grid() == [2.0, 7.0, 30.0]
    with pytest.raises(ConfigError):
        RunConfig({"eval.grid": "a,b"}).grid()
