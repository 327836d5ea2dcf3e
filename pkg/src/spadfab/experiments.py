"""Named experiments: XOR/OR linearity sweeps, coincidence ToF and array frames.

Every experiment is a pure function of its configuration and base seed.
Replicates can run in a process pool; results are gathered in task order so
that parallel and sequential runs write identical files.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compiler import (Coincidence, CombinatorSpec, Constant, NetworkSpec, Or, Xor,
                       compile_lut, compile_network, describe)
from .engine import N_SPADS, count_rising_edges, simulate_lut, simulate_network
from .fabric import TestChipConfig
from .frontend import PS_PER_S, BiasCurve, EdgeStream, Scene, SpadParams, params_from_bias, spad_streams
from .readout import TdcParams, acquire_tof, histogram_sbr, histogram_sbr_sigma


def _pool_map(fn, tasks, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _leaf_masks(n_active: int):
    return [[k for k in range(4) if 4 * j + k < n_active] for j in range(4)]


def xor_tree(n_active: int = N_SPADS) -> TestChipConfig:
    """Parity of SPADs ``0..n_active-1``; the rest are masked out."""
    if not 1 <= n_active <= N_SPADS:
        raise ValueError(f"n_active must lie in 1..16, got {n_active}")
    leaves = [Xor(m) if m else Constant(0) for m in _leaf_masks(n_active)]
    return compile_network(NetworkSpec(tuple(leaves), Xor()))


def or_tree(n_active: int = N_SPADS) -> TestChipConfig:
    if not 1 <= n_active <= N_SPADS:
        raise ValueError(f"n_active must lie in 1..16, got {n_active}")
    leaves = [Or(m) if m else Constant(0) for m in _leaf_masks(n_active)]
    return compile_network(NetworkSpec(tuple(leaves), Or()))


def chip_streams(scene: Scene, spad: SpadParams, seed: int, n_active: int = N_SPADS) -> list:
    """16 test-chip input streams; SPADs at or beyond ``n_active`` stay dark."""
    live = spad_streams(scene, spad, seed, range(n_active))
    return live + [EdgeStream()] * (N_SPADS - n_active)


def count_chip(config: TestChipConfig, scene: Scene, spad: SpadParams, seed: int,
               n_active: int = N_SPADS) -> int:
    """Rising edges of the chip output over the whole scene duration."""
    root = simulate_network(chip_streams(scene, spad, seed, n_active), config)
    return count_rising_edges(root, 0, scene.duration_ps)


# --- linearity sweep ------------------------------------------------------

@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    steps: int
    log: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("sweep needs at least one step")
        if self.log and (self.start <= 0 or self.stop <= 0):
            raise ValueError("log sweep bounds must be > 0")

    def points(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([float(self.start)])
        if self.log:
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.steps)
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class LinearityRow:
    combo: str
    setting: str
    n_spads: int
    flux_hz: float
    mean_count: float
    std_count: float
    expected_count: float
    pde: float
    dead_time_ps: int


@dataclass
class LinearitySetup:
    """Everything a linearity sweep needs, already resolved from config."""

    flux: Sweep = field(default_factory=lambda: Sweep(1e3, 1e9, 13))
    integration_s: float = 0.01
    seeds: int = 20
    xor_spad: SpadParams = field(default_factory=SpadParams)
    xor_n_spads: tuple = (1, 2, 4, 8, 16)
    or_settings: tuple = ()  # (label, SpadParams) pairs


def _linearity_task(task):
    combo, n, spad, flux, duration_ps, seed = task
    config = xor_tree(n) if combo == "xor" else or_tree(n)
    return count_chip(config, Scene(background_flux_hz=flux, duration_ps=duration_ps), spad, seed, n)


def sweep_linearity(setup: LinearitySetup, base_seed: int = 0, jobs: int = 1) -> list:
    """Mean and std of output counts per (combination, flux) over seeded replicates.

    ``expected_count`` is the dead-time-free prediction ``n * (flux*pde + dcr) * T``.
    """
    duration_ps = int(round(setup.integration_s * PS_PER_S))
    combos = [("xor", f"n{n}", n, setup.xor_spad) for n in setup.xor_n_spads]
    combos += [("or", label, N_SPADS, spad) for label, spad in setup.or_settings]
    fluxes = setup.flux.points()
    tasks, keys = [], []
    for combo, label, n, spad in combos:
        for flux in fluxes:
            keys.append((combo, label, n, spad, float(flux)))
            for r in range(setup.seeds):
                tasks.append((combo, n, spad, float(flux), duration_ps, base_seed + r))
    counts = np.array(_pool_map(_linearity_task, tasks, jobs), dtype=float).reshape(len(keys), setup.seeds)
    rows = []
    for (combo, label, n, spad, flux), c in zip(keys, counts):
        rate = flux * spad.pde + spad.dcr_hz
        rows.append(LinearityRow(combo, label, n, flux, float(c.mean()),
                                 float(c.std(ddof=1)) if c.size > 1 else 0.0,
                                 n * rate * setup.integration_s, spad.pde, spad.dead_time_ps))
    return rows


def bias_settings(curve: BiasCurve, v_q: float, v_ex_values, dcr_hz: float = 0.0) -> tuple:
    return tuple((f"vex{v:g}", params_from_bias(curve, v_q, v, dcr_hz)) for v in v_ex_values)


# --- coincidence ToF ------------------------------------------------------

@dataclass
class TofSetup:
    scene: Scene
    spad: SpadParams
    tdc: TdcParams
    frames: int
    luts: tuple = (("or", Or()), ("coinc2", Coincidence(2)), ("coinc3", Coincidence(3)))
    signal_half_width_ps: int = 1000
    topology: str = "macropixel"  # or "test_chip": leaves OR groups of 4, root = the LUT


@dataclass
class TofResult:
    labels: list
    histograms: dict
    signal_window: tuple
    sbr: dict
    sbr_sigma: dict


def signal_window_codes(tdc: TdcParams, tof_ps: float, half_width_ps: float) -> tuple:
    """Half-open code range covering ``tof +- half_width`` relative to the window."""
    rel = tof_ps - tdc.window_offset_ps
    lo = max(0, int(math.floor((rel - half_width_ps) / tdc.lsb_ps)))
    hi = min(tdc.active_codes, int(math.floor((rel + half_width_ps) / tdc.lsb_ps)) + 1)
    if lo >= hi:
        raise ValueError("signal window falls outside the timing window")
    return lo, hi


def _tof_root(setup: TofSetup, spec: CombinatorSpec, streams) -> EdgeStream:
    lut = compile_lut(spec)
    if setup.topology == "macropixel":
        return simulate_lut(streams, lut)
    config = compile_network(NetworkSpec((Or(),) * 4, spec))
    return simulate_network(streams, config)


def run_tof(setup: TofSetup, seed: int = 0) -> TofResult:
    """First-photon histograms for each LUT, all driven by the same SPAD streams."""
    laser = setup.scene.laser
    if laser is None:
        raise ValueError("ToF experiment needs a laser")
    duration = setup.frames * laser.period_ps
    scene = Scene(setup.scene.background_flux_hz, duration, laser)
    n = 4 if setup.topology == "macropixel" else N_SPADS
    streams = spad_streams(scene, setup.spad, seed, range(n))
    window = signal_window_codes(setup.tdc, laser.tof_ps, setup.signal_half_width_ps)
    hists, sbr, sigma = {}, {}, {}
    for label, spec in setup.luts:
        h = acquire_tof(_tof_root(setup, spec, streams), laser, setup.tdc, setup.frames)
        hists[label] = h
        if h.total:
            sbr[label] = histogram_sbr(h, window)
            sigma[label] = histogram_sbr_sigma(h, window)
        else:
            sbr[label] = sigma[label] = float("nan")
    return TofResult([label for label, _ in setup.luts], hists, window, sbr, sigma)


def lut_label(spec: CombinatorSpec) -> str:
    return describe(spec)
