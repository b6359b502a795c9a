"""Experiment configuration: presets, validation, JSON round-trip."""

import json
import math

import pytest

from magloc import (
    ConfigError,
    ExperimentConfig,
    InvalidParameterError,
    Room,
    config_from_dict,
    coupling_constant,
    effective_coupling,
    effective_noise_variance,
    link_budget_params,
    load_config,
    reference_params,
)


def test_room_defaults_and_validation():
    room = Room()
    assert (room.side_x_m, room.side_y_m, room.height_m) == (10.0, 10.0, 3.0)
    assert room.upper.tolist() == [10.0, 10.0, 3.0]
    assert room.lower.tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(InvalidParameterError):
        Room(side_x_m=-1.0)
    with pytest.raises(InvalidParameterError):
        Room(height_m=math.inf)


def test_presets_differ_only_in_coupling_pin():
    ref = reference_params()
    pinned = link_budget_params()
    assert ref.rho_squared_dbm_override is None
    assert pinned.rho_squared_dbm_override == -50.4
    assert ref.sigma_squared_dbm_override == pinned.sigma_squared_dbm_override == -128.8
    assert effective_noise_variance(ref) == effective_noise_variance(pinned)
    assert effective_coupling(ref) == coupling_constant(ref)
    assert effective_coupling(pinned) < effective_coupling(ref)


def test_default_config_is_valid():
    config = ExperimentConfig()
    assert config.trials == 2000
    assert config.seed == 1
    assert config.algorithms == ("ml5d", "ml3d", "wls", "cascade", "baseline")
    assert config.params.sigma_squared_dbm_override == -128.8
    assert config.params.rho_squared_dbm_override is None


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(anchor_count=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=-1)
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=2**64)
    with pytest.raises(ConfigError):
        ExperimentConfig(init_count=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(jobs=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(noise_realizations=-1)
    with pytest.raises(ConfigError):
        ExperimentConfig(algorithms=("wls", "magic"))
    with pytest.raises(ConfigError):
        ExperimentConfig(format="xml")
    with pytest.raises(ConfigError):
        ExperimentConfig(deployment_margin_m=1.6)  # 2*margin exceeds height


def test_dict_round_trip():
    config = ExperimentConfig(trials=7, seed=99, algorithms=("wls",))
    data = json.loads(json.dumps(config.to_dict()))
    back = config_from_dict(data)
    assert back == config


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"trails": 5})
    with pytest.raises(ConfigError):
        config_from_dict({"room": {"side_q_m": 1.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"params": {"warp_factor": 9}})
    with pytest.raises(ConfigError):
        config_from_dict({"params": {"agent_coil": {"loops": 3}}})
    with pytest.raises(ConfigError):
        config_from_dict({"room": 42})


def test_partial_dicts_use_defaults():
    config = config_from_dict({"trials": 3, "room": {"height_m": 4.0}})
    assert config.trials == 3
    assert config.room.height_m == 4.0
    assert config.room.side_x_m == 10.0
    # Partial params merge over the reference preset.
    override = config_from_dict({"params": {"agent_coil": {"turns": 2}}})
    reference = reference_params()
    assert override.params.agent_coil.turns == 2
    assert override.params.agent_coil.area_m2 == reference.agent_coil.area_m2
    assert override.params.anchor_coil == reference.anchor_coil
    assert override.params.sigma_squared_dbm_override == reference.sigma_squared_dbm_override
    # Overrides can be cleared with null.
    cleared = config_from_dict({"params": {"sigma_squared_dbm_override": None}})
    assert cleared.params.sigma_squared_dbm_override is None
    # Invalid merged values still rejected.
    with pytest.raises(ConfigError):
        config_from_dict({"params": {"agent_coil": {"turns": 0}}})


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"trials": 5, "seed": 3, "format": "json"}))
    config = load_config(str(path))
    assert (config.trials, config.seed, config.format) == (5, 3, "json")
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
