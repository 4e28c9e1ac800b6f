import json

import pytest

from zcnas.config import RunConfig
from zcnas.errors import ConfigError
from zcnas.space import MacroSpace, Nb201Space


def test_defaults():
    cfg = RunConfig()
    sc = cfg.scoring_config()
    assert sc.batch == 64 and sc.init.method == "kaiming-normal-fan-in"
    assert isinstance(cfg.space, Nb201Space)
    assert cfg.search_config().k == 1024


@pytest.mark.parametrize("doc", [
    {"sead": 1},
    {"scoring": {"batchsize": 3}},
    {"scoring": {"init": {"mode": "normal"}}},
    {"search": {"iterations": 10}},
    {"paths": {"tmp": "x"}},
    {"aggregation": "geometric"},
    {"scoring": {"init": {"method": "xavier"}}},
])
def test_bad_documents_rejected(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_round_trip_and_sub_seeds(tmp_path):
    cfg = RunConfig.from_dict({"seed": 7, "space": {"kind": "mobile-macro", "resolution": 64},
                               "scoring": {"batch": 8, "init": {"method": "normal", "std": 0.2}},
                               "search": {"T": 50, "k": 80}, "aggregation": "linear"})
    assert isinstance(cfg.space, MacroSpace)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    again = RunConfig.load(p)
    assert again.to_dict() == cfg.to_dict()
    assert again.search_config().k == 50
    sc = again.scoring_config()
    assert len({sc.init.seed, sc.input_seed, sc.probe_seed}) == 3
    assert sc.init.seed == RunConfig(seed=7).scoring_config().init.seed


def test_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        RunConfig.load(p)
