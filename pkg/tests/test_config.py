import pytest

from forgetwin.config import ConfigError, RunConfig, apply_overrides, dump_config, flatten, load_config


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("")
    assert flatten(load_config(p)) == flatten(RunConfig())
    cfg = load_config(p)
    assert cfg.zones.p_max == 0.4e6 and cfg.ppo.clip_ratio == 0.02 and cfg.hold.duration == 540


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("zones.p_max: 0.3e6\nppo.epochs: 7\n")
    cfg = load_config(p, {"zones.p_max": "0.5e6"})
    assert cfg.zones.p_max == 0.5e6 and cfg.ppo.epochs == 7


def test_rejections_name_the_field(tmp_path):
    with pytest.raises(ConfigError, match="temps.required_low"):
        load_config(None, {"temps.required_low": 1100, "temps.required_high": 1000})
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(None, {"bar.colour": "red"})
    with pytest.raises(ConfigError, match="ppo.epochs"):
        load_config(None, {"ppo.epochs": 1.5})
    with pytest.raises(ConfigError, match="line.piece_length"):
        load_config(None, {"line.piece_length": 0.55})
    p = tmp_path / "bad.yaml"
    p.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_dump_roundtrip(tmp_path):
    cfg = apply_overrides(RunConfig(), {"seed": 9, "hold.pattern": [60, 64], "reward.mask_enabled": "false"})
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert flatten(back) == flatten(cfg)
    assert back.reward.mask_enabled is False


def test_zone_layout():
    zones = RunConfig().build_zones()
    assert [z.learnable for z in zones] == [False, False, True, True, True]
    assert all(z.p_max == 0.4e6 for z in zones[2:])
