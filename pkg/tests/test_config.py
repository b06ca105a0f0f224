import json
import os

import pytest

from CODING.schemes import CodingKind
from INGESTION.config import ConfigError, apply_overrides, load_config, parse_config

BASE = {
    "input_coding": {"kind": "phase", "k": 8},
    "hidden_coding": {"kind": "burst", "beta": 2.0},
    "v_th": 0.125,
    "time_steps": 256,
}


def write(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return str(path)


def test_phase_burst_config(tmp_path):
    config = load_config(write(tmp_path, BASE))
    assert config.input_scheme.kind == CodingKind.PHASE
    assert config.input_scheme.k == 8
    assert config.hidden_scheme.kind == CodingKind.BURST
    assert config.hidden_scheme.beta == 2.0
    assert config.hidden_scheme.v_th == 0.125
    assert config.time_steps == 256


def test_input_threshold_defaults_by_kind():
    phase = parse_config(BASE)
    assert phase.input_scheme.v_th == 8.0
    rate = parse_config({**BASE, "input_coding": {"kind": "rate"}})
    assert rate.input_scheme.v_th == 1.0
    real = parse_config({**BASE, "input_coding": {"kind": "real"}})
    assert real.input_scheme.v_th == 1.0


def test_hidden_threshold_from_scheme_wins():
    config = parse_config({**BASE, "hidden_coding": {"kind": "rate", "v_th": 0.5}})
    assert config.hidden_scheme.v_th == 0.5


def test_zero_threshold_rejected():
    with pytest.raises(ConfigError, match="v_th"):
        parse_config({**BASE, "v_th": 0})


def test_missing_time_steps():
    document = dict(BASE)
    del document["time_steps"]
    with pytest.raises(ConfigError, match="time_steps"):
        parse_config(document)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="energy_profile"):
        parse_config({**BASE, "energy_profile": "truenorth-like"})


def test_every_offending_key_listed():
    with pytest.raises(ConfigError) as error:
        parse_config({**BASE, "time_steps": 0, "target_accuracies": [1.5]})
    assert "time_steps" in str(error.value)
    assert "target_accuracies" in str(error.value)


def test_burst_input_rejected():
    with pytest.raises(ConfigError, match="input_coding"):
        parse_config({**BASE, "input_coding": {"kind": "burst"}})


def test_real_hidden_rejected():
    with pytest.raises(ConfigError, match="hidden_coding"):
        parse_config({**BASE, "hidden_coding": {"kind": "real"}})


def test_phase_requires_period():
    with pytest.raises(ConfigError):
        parse_config({**BASE, "input_coding": {"kind": "phase"}})


def test_energy_profile_must_be_on_simplex():
    with pytest.raises(ConfigError, match="sum to 1"):
        parse_config({**BASE, "energy_profiles": [{"name": "odd", "ratios": [0.5, 0.5, 0.5]}]})


def test_relative_paths_resolve_against_config_dir(tmp_path):
    sub = tmp_path / "configs"
    sub.mkdir()
    config = load_config(write(sub, {**BASE, "model_path": "../models/m.json", "dataset": {"test_images": "t.idx"}}))
    assert config.model_path == os.path.normpath(str(tmp_path / "models" / "m.json"))
    assert config.dataset.test_images == str(sub / "t.idx")
    assert config.output_dir == os.path.normpath(str(sub / "runs" / "default"))


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "absent.json"))


def test_overrides_are_revalidated():
    config = parse_config(BASE)
    updated = apply_overrides(config, seed=9, percentile=100.0, subset=None, workers=4)
    assert (updated.seed, updated.percentile, updated.workers) == (9, 100.0, 4)
    assert updated.eval_subset == config.eval_subset
    with pytest.raises(ConfigError, match="workers"):
        apply_overrides(config, workers=0)


def test_out_override_sets_output_dir_and_run_name(tmp_path):
    config = apply_overrides(parse_config(BASE), out=str(tmp_path / "rate_rate"))
    assert config.output_dir == str(tmp_path / "rate_rate")
    assert config.run_name == "rate_rate"


def test_dataset_split_required_on_use():
    config = parse_config(BASE)
    with pytest.raises(ConfigError, match="train_images"):
        config.dataset.split("train")


def test_phase_hidden_threshold_scales_with_period():
    config = parse_config({**BASE, "hidden_coding": {"kind": "phase", "k": 8}, "v_th": 0.5})
    assert config.hidden_scheme.v_th == 4.0
    explicit = parse_config({**BASE, "hidden_coding": {"kind": "phase", "k": 8, "v_th": 1.0}})
    assert explicit.hidden_scheme.v_th == 1.0
