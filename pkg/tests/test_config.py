import json

import pytest

from taperqed import config
from taperqed.config import ConfigError


def test_defaults():
    cfg = config.build({}, env={})
    assert cfg.sweep.wch == [float(w) for w in range(190, 351, 10)]
    assert cfg.sweep.axes == ("x", "z") and cfg.sweep.z_scan == (1.0, 5.0)
    assert cfg.grid.dx == 10 and cfg.spec.channel_width > 0


def test_precedence():
    doc = {"grid": {"dx": 20, "dy": 20}, "sweep": {"workers": 2}}
    env = {"TAPERQED_WORKERS": "3", "TAPERQED_SEED": "7", "OTHER": "x"}
    cfg = config.build(doc, env=env, workers=4)
    assert cfg.grid.dx == 20 and cfg.sweep.seed == 7 and cfg.sweep.workers == 4
    assert config.build(doc, env=env).sweep.workers == 3


def test_range_document():
    cfg = config.build({"wch": {"start": 200, "stop": 240, "step": 20}}, env={})
    assert cfg.sweep.wch == [200.0, 220.0, 240.0]


@pytest.mark.parametrize("doc", [
    {"wch": []},
    {"wch": {"start": 300, "stop": 200, "step": 10}},
    {"wch": {"start": 200, "stop": 300, "step": 0}},
    {"wch": {"start": 200, "stop": 300}},
    {"bogus": 1},
    {"axes": ["y"]},
    {"workers": 0},
    {"z_scan": [5, 1]},
    {"dx": -1},
    {"wch": [190, 190]},
])
def test_invalid(doc):
    with pytest.raises(ConfigError):
        config.build(doc, env={})


def test_env_parsing_and_unknown_env():
    with pytest.raises(ConfigError):
        config.build({}, env={"TAPERQED_NOPE": "1"})


def test_digest_is_stable():
    a = config.build({}, env={})
    b = config.build({}, env={})
    assert a.digest() == b.digest()
    assert config.build({"seed": 1}, env={}).digest() != a.digest()


def test_load(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"sweep": {"wch": [220]}}))
    assert config.load(p, env={}).sweep.wch == [220.0]
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        config.load(p, env={})
    with pytest.raises(ConfigError):
        config.load(tmp_path / "missing.json", env={})
