from pathlib import Path

import pytest

from spadfab.arraysim import PixelMode
from spadfab.compiler import Coincidence, Or
from spadfab.config import (DESK_INTEGRATION_S, FULL_INTEGRATION_S, FULL_SEEDS, default_mode_map,
                            load_experiment, power_params_from)
from spadfab.errors import ConfigError, OutOfBounds

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_without_file():
    lin = load_experiment(None, "sweep-linearity").setup
    assert lin.integration_s == DESK_INTEGRATION_S and lin.seeds == 20
    assert [s[0] for s in lin.or_settings] == ["vex1", "vex4"]
    big = load_experiment(None, "sweep-linearity", paper_scale=True).setup
    assert big.integration_s == FULL_INTEGRATION_S and big.seeds == FULL_SEEDS
    tof = load_experiment(None, "tof").setup
    assert [lbl for lbl, _ in tof.luts] == ["or", "coinc2", "coinc3"]
    assert tof.luts[1][1] == Coincidence(2)
    arr = load_experiment(None, "array").setup
    assert arr.modes == default_mode_map() and arr.pc_lut == Or()


@pytest.mark.parametrize("name,scenario", [("linearity.yaml", "sweep-linearity"), ("tof.yaml", "tof"),
                                           ("array.yaml", "array")])
def test_shipped_configs_load(name, scenario):
    exp = load_experiment(CONFIGS / name, scenario)
    assert exp.scenario == scenario


def test_array_overrides_expand():
    scene = load_experiment(CONFIGS / "array.yaml", "array").setup.scene
    assert scene.at(7, 7).background_flux_hz == 5e6
    assert scene.at(8, 7).background_flux_hz == 1e6
    assert scene.at(0, 0).laser.tof_ps == 5000


def test_numbers_as_strings(tmp_path):
    p = _write(tmp_path, "scene: {background_flux_hz: 1e7, laser: {rep_rate_hz: '1e6', tof_ps: 10000}}\n")
    setup = load_experiment(p, "tof").setup
    assert setup.scene.background_flux_hz == 1e7 and setup.scene.laser.rep_rate_hz == 1e6


@pytest.mark.parametrize("text,match", [
    ("bogus: 1\n", "unknown key 'bogus'"),
    ("spad: {pde: 2}\n", "spad"),
    ("spad: {pdee: 0.3}\n", "unknown key 'pdee'"),
    ("frames: 1.5\n", "integer"),
    ("scene: {background_flux_hz: 1e6}\n", "laser"),
    ("luts: [or, banana]\n", "luts"),
    ("luts: [or, or]\n", "duplicate"),
    ("tdc: {window_len_ps: 2000000}\n", "window"),
    ("scenario: array\n", "scenario"),
    ("[1, 2]\n", "mapping"),
    ("a: [\n", "invalid YAML"),
])
def test_tof_config_errors(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_experiment(_write(tmp_path, text), "tof")


def test_override_out_of_bounds(tmp_path):
    p = _write(tmp_path, "scene: {overrides: [{rect: [30, 30, 4, 4], background_flux_hz: 1}]}\n")
    with pytest.raises(OutOfBounds):
        load_experiment(p, "array")


def test_relative_paths_resolve_against_config(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "m.txt").write_text(("T" * 32 + "\n") * 32)
    p = _write(tmp_path / "sub", "mode_map: m.txt\n")
    assert load_experiment(p, "array").setup.modes.counts()[PixelMode.TOF] == 1024
    with pytest.raises(ConfigError, match="does not exist"):
        load_experiment(_write(tmp_path, "mode_map: nope.txt\n"), "array")


def test_power_params_file(tmp_path):
    assert power_params_from(CONFIGS / "power.yaml").p_tof_w == 10e-6
    with pytest.raises(ConfigError, match="p_tof_w >= p_pc_w"):
        power_params_from(_write(tmp_path, "power: {p_tof_w: 1.0e-6, p_pc_w: 2.0e-6}\n"))
