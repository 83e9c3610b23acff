import pytest

from saclo.configfile import (
    ConfigError,
    build_config,
    dump_all,
    load_configs,
    parse_sections,
)
from saclo.env import EnvConfig
from saclo.ppo import PpoConfig


def test_parse_basic_sections():
    text = """
    [env]
    control_hz = 100   # comment
    noise_enabled = false

    [ppo]
    n_envs = 8
    """
    s = parse_sections(text)
    assert s["env"]["control_hz"] == "100"
    assert s["ppo"]["n_envs"] == "8"


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        parse_sections("[env]\nnot a kv pair\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_sections("orphan = 1\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_sections("[env]\nmass = 1\nmass = 2\n")


def test_build_config_coercion():
    cfg = build_config(EnvConfig, {"control_hz": "25", "noise_enabled": "false",
                                   "mass": "14.5"})
    assert cfg.control_hz == 25.0
    assert cfg.noise_enabled is False
    assert cfg.mass == 14.5


def test_build_config_tuple_field():
    cfg = build_config(PpoConfig, {"policy_hidden": "32,32", "n_envs": "4"})
    assert cfg.policy_hidden == (32, 32)
    assert cfg.n_envs == 4


def test_build_config_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        build_config(EnvConfig, {"not_a_field": "1"})


def test_build_config_bad_value():
    with pytest.raises(ConfigError, match="cannot parse"):
        build_config(EnvConfig, {"mass": "heavy"})


def test_load_configs_roundtrip(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[env]\nmass = 16.0\n[ppo]\niterations = 5\n")
    cfgs = load_configs(p)
    assert cfgs["env"].mass == 16.0
    assert cfgs["ppo"].iterations == 5
    assert "distill" in cfgs  # defaults fill absent sections
    text = dump_all(cfgs)
    p2 = tmp_path / "c2.cfg"
    p2.write_text(text)
    cfgs2 = load_configs(p2)
    assert cfgs2["env"] == cfgs["env"]
    assert cfgs2["ppo"] == cfgs["ppo"]


def test_unknown_section(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[rocket]\nthrust = 11\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_configs(p)
