import json

import pytest

from erpspeller.core import config
from erpspeller.core.errors import ValidationError
from erpspeller.core.run_config import DEFAULTS, RunConfig, load_run_config, merge, resolve_config_path


def test_bundled_defaults_match_the_built_in_ones():
    run_config = load_run_config()
    assert run_config.to_dict() == DEFAULTS
    assert run_config.source == config.DEFAULT_CONFIG_FILE


def test_bundled_name_resolves():
    assert resolve_config_path("default.json") == config.DEFAULT_CONFIG_FILE


def test_defaults_build_the_standard_protocol():
    run_config = RunConfig()
    protocol = run_config.protocol()
    assert protocol.paradigm_id == "MS_P"
    assert protocol.offline.runs == 3
    assert protocol.online.blocks == 42
    assert run_config.seeds() == list(range(1, 19))
    assert run_config.profile(4).seed == 4


def test_overrides_are_layered():
    run_config = RunConfig({"protocol": {"online": {"max_trials": 10}}, "paradigm": "LS_P"})
    assert run_config.protocol().online.max_trials == 10
    assert run_config.protocol().online.min_trials == 2
    assert run_config.paradigm_id == "LS_P"


def test_integer_for_float_key():
    assert RunConfig({"profile": {"noise_rms_uv": 4}}).profile().noise_rms_uv == 4.0


@pytest.mark.parametrize("document, path", [
    ({"protocol": {"online": {"blokcs": 3}}}, "protocol.online.blokcs"),
    ({"colour": "red"}, "colour"),
])
def test_unknown_key_names_its_path(document, path):
    with pytest.raises(ValidationError, match=path):
        merge(DEFAULTS, document)


@pytest.mark.parametrize("document", [
    {"protocol": {"online": {"blocks": "42"}}},
    {"cohort": {"counterbalance": 1}},
    {"cohort": {"seeds": True}},
    {"profile": {"noise_rms_uv": "loud"}},
    {"protocol": "full"},
])
def test_wrong_types(document):
    with pytest.raises(ValidationError):
        RunConfig(document)


def test_invalid_combination_fails_at_load():
    with pytest.raises(ValidationError):
        RunConfig({"protocol": {"online": {"min_trials": 8, "max_trials": 4}}})


def test_explicit_seed_list():
    run_config = RunConfig({"cohort": {"seeds": [5, 9, 11]}})
    assert run_config.seeds() == [5, 9, 11]
    assert run_config.with_seed_count(2).seeds() == [1, 2]


def test_no_erp_profile():
    profile = RunConfig({"profile": {"erp_components": []}}).profile()
    assert profile.erp_components == ()


def test_custom_components(tmp_path):
    document = {"profile": {"erp_components": [
        {"name": "P300", "latency_ms": 400.0, "width_ms": 100.0, "amplitude_uv": 8.0, "channel_gain": {"Pz": 1.0}},
    ]}}
    path = tmp_path / "p300.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    profile = load_run_config(str(path)).profile()
    assert profile.component("P300").latency_ms == 400.0
    assert profile.component("N200") is None


def test_malformed_component():
    with pytest.raises(ValidationError, match="erp_components"):
        RunConfig({"profile": {"erp_components": [{"name": "P300"}]}})


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ValidationError, match="not valid JSON"):
        load_run_config(str(path))
