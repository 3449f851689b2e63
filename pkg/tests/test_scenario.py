import json
import warnings
from pathlib import Path

import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from ers_sim.errors import ScenarioError
from ers_sim.scenario import (ScenarioWarning, copy_scenario, load_preset, load_scenario, parse_document,
                              preset_names, preset_text, scenario_from_dict, scenario_json_schema, set_path)

SCHEMA_FILE = Path(__file__).resolve().parents[1] / "docs" / "scenario.schema.json"

# presets that deliberately leave the studied traffic range
EXPECTED_WARNINGS = {"delhi-ring-road", "phase3", "single-vehicle"}


def load_quiet(name):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScenarioWarning)
        return load_preset(name)


def baseline_doc():
    return parse_document(preset_text("baseline-5km"))


def test_baseline_preset_values():
    sc = load_preset("baseline-5km")
    assert sc.corridor.length_m == 5000.0
    assert sc.corridor.pitch_m == 10.0
    assert sc.corridor.peak_kw == 100.0
    assert sc.warnings == []


def test_empty_document_names_first_missing_key():
    with pytest.raises(ScenarioError) as exc:
        load_scenario("")
    assert exc.value.code == "MISSING_FIELD"
    assert exc.value.key == "corridor.length_m"


def test_battery_kind_needs_battery_table():
    with pytest.raises(ScenarioError) as exc:
        load_scenario("kind = 'battery'")
    assert exc.value.code == "MISSING_FIELD" and exc.value.key == "battery"


def test_coil_longer_than_pitch():
    doc = set_path(baseline_doc(), "corridor.coil_length_m", 12.0)
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.code == "INVALID_VALUE"
    assert exc.value.key == "corridor.coil_length_m"


def test_parse_error():
    with pytest.raises(ScenarioError) as exc:
        load_scenario("[corridor\n")
    assert exc.value.code == "PARSE_ERROR"
    with pytest.raises(ScenarioError) as exc:
        load_scenario(b"\xff\xfe")
    assert exc.value.code == "PARSE_ERROR"


@pytest.mark.parametrize("dotted", ["bogus", "corridor.bogus", "traffic.classes.bus.bogus", "traffic.classes.tram"])
def test_unknown_keys_rejected(dotted):
    doc = set_path(baseline_doc(), dotted, {} if dotted.endswith("tram") else 1)
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(doc)
    assert exc.value.code == "INVALID_VALUE"


def test_wrong_type_rejected():
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(set_path(baseline_doc(), "corridor.length_m", "five km"))
    assert exc.value.code == "INVALID_VALUE" and exc.value.key == "corridor.length_m"


@pytest.mark.parametrize("rate,warns", [(499.0, True), (500.0, False), (800.0, False), (801.0, True)])
def test_rate_outside_studied_range_warns(rate, warns):
    doc = set_path(baseline_doc(), "traffic.arrival_rate_vph", rate)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = scenario_from_dict(doc)
    got = [w for w in caught if issubclass(w.category, ScenarioWarning)]
    assert bool(got) is warns
    assert bool(sc.warnings) is warns


@pytest.mark.parametrize("name", preset_names())
def test_every_preset_loads(name):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = load_preset(name)
    msgs = [str(w.message) for w in caught if issubclass(w.category, ScenarioWarning)]
    if name in EXPECTED_WARNINGS:
        assert msgs and all("arrival_rate_vph" in m for m in msgs)
    else:
        assert msgs == []
    assert sc.name or sc.kind


@pytest.mark.parametrize("name", preset_names())
def test_presets_satisfy_schema(name):
    jsonschema.validate(parse_document(preset_text(name)), scenario_json_schema())


def test_schema_rejects_unknown_key():
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(set_path(baseline_doc(), "corridor.bogus", 1), scenario_json_schema())


def test_published_schema_is_current():
    schema = scenario_json_schema()
    jsonschema.Draft202012Validator.check_schema(schema)
    assert json.loads(SCHEMA_FILE.read_text()) == schema


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        preset_text("atlantis")


def test_set_path_does_not_mutate():
    doc = baseline_doc()
    out = set_path(doc, "traffic.speed_kmh", 42.0)
    assert "speed_kmh" not in doc["traffic"] or doc["traffic"]["speed_kmh"] != 42.0
    assert out["traffic"]["speed_kmh"] == 42.0


def test_copy_scenario_revalidates():
    sc = load_quiet("baseline-5km")
    short = copy_scenario(sc, sim={"duration_s": 10.0})
    assert short.sim.duration_s == 10.0 and sc.sim.duration_s != 10.0
    with pytest.raises(ScenarioError):
        copy_scenario(sc, corridor={"coil_length_m": 11.0})
    with pytest.raises(AttributeError):
        copy_scenario(sc, corridor={"bogus": 1})


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10.0))
def test_coil_up_to_pitch_accepted(coil):
    sc = scenario_from_dict(set_path(baseline_doc(), "corridor.coil_length_m", coil))
    assert sc.corridor.coil_length_m == coil
