#!/usr/bin/env python3
"""Tests for run configuration parsing and seed precedence."""

import os
import sys
from pathlib import Path

import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.config import RunConfig, build_run_config, load_run_config, parse_config_text
from core.dataset import TEST_GRID, TRAIN_GRID
from interfaces import ConfigError, OpticalSetup


def test_defaults_match_the_reference_setup():
    config = build_run_config(environ={})
    assert config.setup == OpticalSetup.reference_bench()
    assert config.train_grid == TRAIN_GRID and config.test_grid == TEST_GRID
    assert config.bit_depths == (8, 10)
    assert config.seeds() == {"noise.seed": 42, "model.init_seed": 7, "train.seed": 11}
    assert config.train.learning_rate == 2.0 and config.train.target_mse == 5e-5 and config.train.max_epochs == 50_000
    assert config.output_dir == Path("runs/latest")


def test_echo_uses_config_file_keys():
    echo = RunConfig().echo()
    assert echo["optics.wavelength_nm"] == 500.0
    assert echo["optics.pixel_pitch_wavelengths"] == 4.0
    assert echo["grid.train"] == "10:10:200"
    assert echo["detector.bit_depth"] == "8,10"
    assert set(parse_config_text("\n".join(f"{k} = {v}" for k, v in echo.items()))) == set(echo)


def test_echo_parses_back_to_the_same_config():
    text = "\n".join(f"{k} = {v}" for k, v in RunConfig().echo().items())
    assert build_run_config(parse_config_text(text), environ={}) == RunConfig()


def test_parse_config_text():
    values = parse_config_text(
        """
        # comment line
        optics.wavelength_nm = 633   # HeNe
        grid.test = 5:5:100
        detector.bit_depth = 12
        noise.clamp = yes
        """
    )
    assert values["optics.wavelength_nm"] == 633.0
    assert values["grid.test"].count == 20
    assert values["detector.bit_depth"] == (12,)
    assert values["noise.clamp"] is True


@pytest.mark.parametrize(
    "text, key, line",
    [
        ("colour = blue", "colour", 1),
        ("\nnoise.seed = many", "noise.seed", 2),
        ("noise.clamp = maybe", "noise.clamp", 1),
        ("grid.train = 10:10", "grid.train", 1),
        ("train.seed = -3", "train.seed", 1),
    ],
)
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key and info.value.line == line
    assert info.value.exit_code == 1


def test_line_without_equals_sign():
    with pytest.raises(ConfigError) as info:
        parse_config_text("noise.seed 4")
    assert info.value.line == 1


def test_seed_precedence():
    env = {"FRINGE_SEED": "5"}
    assert build_run_config(environ=env).seeds() == {"noise.seed": 5, "model.init_seed": 5, "train.seed": 5}
    from_file = build_run_config({"noise.seed": 9}, environ=env)
    assert from_file.noise_seed == 9 and from_file.init_seed == 5
    overridden = build_run_config({"noise.seed": 9}, seed=3, environ=env)
    assert set(overridden.seeds().values()) == {3}


def test_bad_environment_seed():
    with pytest.raises(ConfigError) as info:
        build_run_config(environ={"FRINGE_SEED": "abc"})
    assert info.value.key == "FRINGE_SEED"


def test_invalid_combinations_are_config_errors():
    with pytest.raises(ConfigError):
        build_run_config({"optics.wavefront_radius_m": 0.001}, environ={})
    with pytest.raises(ConfigError):
        build_run_config({"dataset.downsample": "median"}, environ={})
    with pytest.raises(ConfigError):
        build_run_config({"detector.bit_depth": ()}, environ={})
    with pytest.raises(ConfigError):
        build_run_config({"train.learning_rate": 0.0}, environ={})


def test_load_run_config_from_file(tmp_path, monkeypatch):
    monkeypatch.delenv("FRINGE_SEED", raising=False)
    path = tmp_path / "run.conf"
    path.write_text("noise.realizations = 3\noutput.dir = out/a\n", encoding="utf-8")
    config = load_run_config(path, overrides={"noise.clamp": True})
    assert config.realizations == 3
    assert config.clamp is True
    assert config.output_dir == Path("out/a")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config file"):
        load_run_config(tmp_path / "absent.conf")
