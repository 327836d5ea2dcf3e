"""YAML experiment documents.

Keys mirror the dataclass fields they populate. Numbers may be written in
any YAML or Python float form (``1e7`` is accepted even though YAML 1.1
reads it as a string). Relative file paths resolve against the document's
directory. A complete reference lives in the README.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .arraysim import ARRAY_SIDE, ModeMap, PixelMode, PowerParams, read_mode_map
from .compiler import describe, parse_combinator
from .errors import ConfigError, InvalidSpec
from .experiments import LinearitySetup, Sweep, TofSetup, bias_settings
from .frontend import BiasCurve, Laser, Scene, SpadParams, default_bias_curve, load_bias_curve
from .readout import TdcParams

SCENARIOS = ("sweep-linearity", "tof", "array")

DESK_INTEGRATION_S = 0.01
DESK_SEEDS = 20
FULL_INTEGRATION_S = 1.0
FULL_SEEDS = 100


def _num(value, where: str, kind=float):
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    try:
        out = kind(float(value)) if kind is int else kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if kind is int and float(value) != out:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return out


def _section(doc: dict, key: str, allowed) -> dict:
    sec = doc.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected a mapping")
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"{key}: unknown key {unknown[0]!r} (allowed: {', '.join(sorted(allowed))})")
    return sec


def _build(cls, sec: dict, where: str, base=None):
    """Instantiate a frozen dataclass from a mapping, coercing numeric fields."""
    kinds = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in sec.items():
        if k not in kinds:
            raise ConfigError(f"{where}: unknown key {k!r}")
        t = str(kinds[k])
        if t.startswith("int"):
            kwargs[k] = _num(v, f"{where}.{k}", int)
        elif t.startswith("float"):
            kwargs[k] = None if v is None and "None" in t else _num(v, f"{where}.{k}")
        elif t == "bool":
            kwargs[k] = bool(v)
        else:
            kwargs[k] = v
    try:
        return dataclasses.replace(base, **kwargs) if base is not None else cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _path(base_dir: Path, value, where: str) -> Path:
    p = Path(value)
    if not p.is_absolute():
        p = base_dir / p
    if not p.exists():
        raise ConfigError(f"{where}: file {str(p)!r} does not exist")
    return p


def _spad(sec, where, base=None) -> SpadParams:
    return _build(SpadParams, sec or {}, where, base)


def _laser(sec, where) -> Laser | None:
    if sec is None:
        return None
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}: expected a mapping")
    return _build(Laser, sec, where)


def _overrides(items, where) -> dict:
    """``[{rect: [x, y, w, h], <field>: value, ...}, ...]`` -> per-macropixel dict."""
    from .arraysim import Rect

    out = {}
    if not items:
        return out
    if not isinstance(items, list):
        raise ConfigError(f"{where}: expected a list")
    allowed = {"background_flux_hz", "tof_ps", "jitter_sigma_ps", "signal_photons_per_pulse_mean", "laser"}
    for i, item in enumerate(items):
        item = dict(item)
        if "rect" not in item:
            raise ConfigError(f"{where}[{i}]: missing rect")
        rect = Rect.of(item.pop("rect"))
        bad = sorted(set(item) - allowed)
        if bad:
            raise ConfigError(f"{where}[{i}]: unknown key {bad[0]!r}")
        fields = {}
        for k, v in item.items():
            if k == "laser":
                if v not in (None, False, "off"):
                    raise ConfigError(f"{where}[{i}].laser: only 'off' is allowed in an override")
                fields["laser"] = None
            else:
                fields[k] = _num(v, f"{where}[{i}].{k}")
        for xy in rect.cells():
            out.setdefault(xy, {}).update(fields)
    return out


def _scene(sec, where, default_duration_ps=None) -> Scene:
    sec = dict(sec or {})
    bad = sorted(set(sec) - {"background_flux_hz", "duration_ps", "laser", "overrides"})
    if bad:
        raise ConfigError(f"{where}: unknown key {bad[0]!r}")
    kwargs = {}
    if "background_flux_hz" in sec:
        kwargs["background_flux_hz"] = _num(sec["background_flux_hz"], f"{where}.background_flux_hz")
    if "duration_ps" in sec:
        kwargs["duration_ps"] = _num(sec["duration_ps"], f"{where}.duration_ps", int)
    elif default_duration_ps is not None:
        kwargs["duration_ps"] = default_duration_ps
    kwargs["laser"] = _laser(sec.get("laser"), f"{where}.laser")
    kwargs["overrides"] = _overrides(sec.get("overrides"), f"{where}.overrides")
    try:
        return Scene(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _lut_list(items, where) -> tuple:
    out = []
    for i, text in enumerate(items):
        try:
            spec = parse_combinator(str(text))
        except InvalidSpec as exc:
            raise ConfigError(f"{where}[{i}]: {exc}") from None
        out.append((describe(spec), spec))
    labels = [lbl for lbl, _ in out]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{where}: duplicate LUT labels {labels}")
    return tuple(out)


@dataclass
class ArraySetup:
    scene: Scene
    spad: SpadParams
    tdc: TdcParams
    modes: ModeMap
    pc_lut: object
    tof_lut: object
    power: PowerParams
    clock_hz: float = 10e6


def default_mode_map() -> ModeMap:
    """Centre 16x16 region in ToF, the rest photon counting."""
    q = ARRAY_SIDE // 4
    return ModeMap.uniform(PixelMode.PHOTON_COUNTING).with_region((q, q, 2 * q, 2 * q), PixelMode.TOF)


@dataclass
class ExperimentConfig:
    """A parsed experiment document.

    ``setup`` holds the scenario-specific, fully resolved parameters
    (:class:`LinearitySetup`, :class:`TofSetup` or :class:`ArraySetup`).
    """

    scenario: str
    setup: object
    source: Path | None = None
    notes: dict = field(default_factory=dict)


def linearity_setup(doc: dict, base_dir: Path, paper_scale: bool = False) -> LinearitySetup:
    allowed_top = {"scenario", "integration_s", "seeds", "flux", "xor", "or"}
    bad = sorted(set(doc) - allowed_top)
    if bad:
        raise ConfigError(f"unknown key {bad[0]!r} for sweep-linearity")
    integration = FULL_INTEGRATION_S if paper_scale else DESK_INTEGRATION_S
    seeds = FULL_SEEDS if paper_scale else DESK_SEEDS
    if "integration_s" in doc and not paper_scale:
        integration = _num(doc["integration_s"], "integration_s")
    if "seeds" in doc and not paper_scale:
        seeds = _num(doc["seeds"], "seeds", int)
    if integration <= 0 or seeds < 1:
        raise ConfigError("integration_s must be > 0 and seeds >= 1")

    fs = _section(doc, "flux", {"start", "stop", "steps", "log"})
    try:
        flux = Sweep(_num(fs.get("start", 1e3), "flux.start"), _num(fs.get("stop", 1e8), "flux.stop"),
                     _num(fs.get("steps", 11), "flux.steps", int), bool(fs.get("log", True)))
    except ValueError as exc:
        raise ConfigError(f"flux: {exc}") from None

    xs = _section(doc, "xor", {"n_spads", "spad"})
    n_spads = tuple(_num(n, "xor.n_spads", int) for n in xs.get("n_spads", (1, 2, 4, 8, 16)))
    if any(not 1 <= n <= 16 for n in n_spads):
        raise ConfigError("xor.n_spads entries must lie in 1..16")
    xor_spad = _spad(xs.get("spad"), "xor.spad")

    os_ = _section(doc, "or", {"bias_curve", "v_q", "v_ex", "dcr_hz", "enabled"})
    or_settings = ()
    if os_.get("enabled", True):
        curve: BiasCurve = (load_bias_curve(_path(base_dir, os_["bias_curve"], "or.bias_curve"))
                            if "bias_curve" in os_ else default_bias_curve())
        v_ex = [_num(v, "or.v_ex") for v in os_.get("v_ex", (1.0, 4.0))]
        if not v_ex:
            raise ConfigError("or.v_ex must not be empty")
        or_settings = bias_settings(curve, _num(os_.get("v_q", 0.6), "or.v_q"), v_ex,
                                    _num(os_.get("dcr_hz", 0.0), "or.dcr_hz"))
    return LinearitySetup(flux, integration, seeds, xor_spad, n_spads, or_settings)


DEFAULT_TOF_SPAD = SpadParams(pde=0.5, dcr_hz=0.0, dead_time_ps=10_000, pulse_width_ps=5_000)
DEFAULT_TOF_SCENE = Scene(background_flux_hz=1e7, duration_ps=1,
                          laser=Laser(rep_rate_hz=1e6, tof_ps=50_000, jitter_sigma_ps=200,
                                      signal_photons_per_pulse_mean=1.0))
DEFAULT_TDC = TdcParams(gro_period_ps=1600, window_len_ps=200_000, window_offset_ps=0)


def tof_setup(doc: dict, base_dir: Path, paper_scale: bool = False) -> TofSetup:
    allowed_top = {"scenario", "frames", "topology", "spad", "scene", "tdc", "luts", "signal_half_width_ps"}
    bad = sorted(set(doc) - allowed_top)
    if bad:
        raise ConfigError(f"unknown key {bad[0]!r} for tof")
    scene = _scene(doc["scene"], "scene", 1) if "scene" in doc else DEFAULT_TOF_SCENE
    if scene.laser is None:
        raise ConfigError("scene.laser is required for the tof scenario")
    topology = doc.get("topology", "macropixel")
    if topology not in ("macropixel", "test_chip"):
        raise ConfigError("topology must be macropixel or test_chip")
    frames = _num(doc.get("frames", 10_000), "frames", int)
    if frames < 1:
        raise ConfigError("frames must be >= 1")
    luts = _lut_list(doc.get("luts", ("or", "coinc2", "coinc3")), "luts")
    if not luts:
        raise ConfigError("luts must not be empty")
    tdc = _build(TdcParams, _section(doc, "tdc", {"gro_period_ps", "window_len_ps", "window_offset_ps"}),
                 "tdc", DEFAULT_TDC)
    if tdc.window_offset_ps + tdc.window_len_ps > scene.laser.period_ps:
        raise ConfigError("tdc window extends past the laser period")
    return TofSetup(scene=scene, spad=_spad(doc.get("spad"), "spad", DEFAULT_TOF_SPAD), tdc=tdc,
                    frames=frames, luts=luts,
                    signal_half_width_ps=_num(doc.get("signal_half_width_ps", 1000), "signal_half_width_ps", int),
                    topology=topology)


DEFAULT_ARRAY_SCENE = Scene(background_flux_hz=1e6, duration_ps=100_000_000,
                            laser=Laser(rep_rate_hz=1e6, tof_ps=5_000, jitter_sigma_ps=100,
                                        signal_photons_per_pulse_mean=2.0))


def array_setup(doc: dict, base_dir: Path, paper_scale: bool = False) -> ArraySetup:
    allowed_top = {"scenario", "mode_map", "spad", "scene", "tdc", "luts", "power", "clock_hz"}
    bad = sorted(set(doc) - allowed_top)
    if bad:
        raise ConfigError(f"unknown key {bad[0]!r} for array")
    modes = read_mode_map(_path(base_dir, doc["mode_map"], "mode_map")) if "mode_map" in doc else default_mode_map()
    scene = _scene(doc["scene"], "scene", DEFAULT_ARRAY_SCENE.duration_ps) if "scene" in doc else DEFAULT_ARRAY_SCENE
    luts = _section(doc, "luts", {"photon_counting", "tof"})
    try:
        pc_lut = parse_combinator(str(luts.get("photon_counting", "or")))
        tof_lut = parse_combinator(str(luts.get("tof", "coinc2")))
    except InvalidSpec as exc:
        raise ConfigError(f"luts: {exc}") from None
    tdc = _build(TdcParams, _section(doc, "tdc", {"gro_period_ps", "window_len_ps", "window_offset_ps"}),
                 "tdc", TdcParams(gro_period_ps=1600, window_len_ps=100_000))
    power = _build(PowerParams, _section(doc, "power", {"p_tof_w", "p_pc_w", "p_off_w", "static_w"}), "power")
    clock = _num(doc.get("clock_hz", 10e6), "clock_hz")
    return ArraySetup(scene, _spad(doc.get("spad"), "spad", DEFAULT_TOF_SPAD), tdc, modes, pc_lut, tof_lut,
                      power, clock)


_BUILDERS = {"sweep-linearity": linearity_setup, "tof": tof_setup, "array": array_setup}


def load_document(path) -> dict:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def load_experiment(path, scenario: str, paper_scale: bool = False) -> ExperimentConfig:
    """Parse ``path`` (or use defaults when ``path`` is None) for ``scenario``."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if path is None:
        doc, base = {}, Path.cwd()
    else:
        doc, base = load_document(path), Path(path).resolve().parent
    declared = doc.get("scenario", scenario)
    if declared != scenario:
        raise ConfigError(f"config declares scenario {declared!r} but {scenario!r} was requested")
    setup = _BUILDERS[scenario](doc, base, paper_scale)
    return ExperimentConfig(scenario, setup, Path(path) if path else None)


def power_params_from(path) -> PowerParams:
    doc = load_document(path)
    sec = doc.get("power", doc)
    sec = {k: v for k, v in sec.items() if k != "scenario"} if isinstance(sec, dict) else sec
    if not isinstance(sec, dict):
        raise ConfigError("power: expected a mapping")
    return _build(PowerParams, sec, "power")
