import pytest

from seq2drnn.config import ConfigError, DecodeLimits, TrainConfig, coerce, merge, parse_config_text, parser_defaults


def test_defaults():
    c = TrainConfig()
    assert (c.batch_size, c.hidden_dim, c.embed_dim, c.layers, c.patience) == (64, 256, 256, 2, 3)
    assert (c.learning_rate, c.beta1, c.beta2, c.epsilon) == (1e-3, 0.9, 0.999, 1e-8)
    assert c.sync and c.is_tree and c.attention_injection == "combined"
    assert parser_defaults().layers == 3 and parser_defaults().parser_mode


def test_arch_controls_sync():
    assert not TrainConfig(arch="seq2drnn").sync
    assert not TrainConfig(arch="seq2seq").is_tree
    with pytest.raises(ConfigError):
        TrainConfig(arch="transformer")


def test_validation():
    with pytest.raises(ConfigError, match="hidden_dim"):
        TrainConfig(hidden_dim=0)
    with pytest.raises(ConfigError):
        TrainConfig(alpha=-1.0)
    with pytest.raises(ConfigError):
        DecodeLimits(max_depth=0)
    assert TrainConfig(alpha=0.0, seed=0).alpha == 0.0


def test_config_text_and_merge():
    layer = parse_config_text("# comment\nhidden-dim = 32\nalpha=2.5\nlog_wall_time=false\n\n")
    assert layer == {"hidden_dim": 32, "alpha": 2.5, "log_wall_time": False}
    c = merge(TrainConfig(), layer, {"alpha": 1.5})
    assert c.hidden_dim == 32 and c.alpha == 1.5 and not c.log_wall_time


def test_unknown_and_bad_keys_are_named():
    with pytest.raises(ConfigError, match="'colour'"):
        parse_config_text("colour=red")
    with pytest.raises(ConfigError, match="'layers'"):
        coerce("layers", "two")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("just words")
    with pytest.raises(ConfigError, match="'bogus'"):
        TrainConfig.from_dict({"bogus": 1})


def test_echo_is_sorted_and_complete():
    lines = TrainConfig(arch="seq2drnn").echo().splitlines()
    keys = [line.split("=")[0] for line in lines]
    assert keys == sorted(keys)
    assert "sync=false" in lines and "arch=seq2drnn" in lines
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()
