import json

import pytest

from geacl.config import (
    ConfigError, GossipSection, RunConfig, from_dict, load, packaged_config, to_dict,
)


@pytest.mark.parametrize("name", ["factory_default.json", "disaster_default.json",
                                  "synthetic_default.json", "walkthrough.json"])
def test_packaged_configs_load_and_round_trip(name):
    cfg = load(packaged_config(name))
    assert from_dict(to_dict(cfg)) == cfg


def test_defaults():
    cfg = from_dict({})
    assert cfg == RunConfig() and cfg.gossip == GossipSection()


def test_overrides_dotted_and_typed():
    cfg = from_dict({}, ["gossip.fanout=3", "mode=BaselineDirect", "network.drop_p=0.1"])
    assert cfg.gossip.fanout == 3 and cfg.mode == "BaselineDirect"
    assert cfg.network.drop_p == 0.1


@pytest.mark.parametrize("data,needle", [
    ({"gossip": {"fanout": 0}}, "gossip.fanout"),
    ({"mode": "Telepathy"}, "mode"),
    ({"network": {"drop_p": 1.5}}, "network.drop_p"),
    ({"synthetic": {"stop": "never"}}, "synthetic.stop"),
    ({"disaster": {"drones": 3}}, "disaster"),
    ({"bogus": 1}, "bogus"),
])
def test_validation_rejects(data, needle):
    with pytest.raises(ConfigError) as e:
        from_dict(data)
    assert needle in str(e.value)


def test_error_is_line_anchored(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 1, "gossip": {"fanout": 0}}, indent=2))
    with pytest.raises(ConfigError) as e:
        load(p)
    assert str(e.value).startswith(f"{p}:4:")


def test_bad_override():
    with pytest.raises(ConfigError):
        from_dict({}, ["fanout"])
