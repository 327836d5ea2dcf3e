"""32x32 macropixel array: region-of-interest modes, frames and power.

Each macropixel is a 2x2 SPAD cluster read through one LUT. Its mode bit
selects photon counting (ripple counter counts LUT pulses) or direct ToF
(the TDC timestamps the first LUT pulse per laser period). An extra Off
state disables a macropixel entirely; it is stored in the chain as photon
counting with an all-zero LUT.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, OutOfBounds, SimulationError, SpadfabError
from .fabric import ARRAY_SIDE, ArrayConfig, Lut16, MacropixelConfig, Mode
from .engine import simulate_lut
from .frontend import Scene, SpadParams, spad_streams
from .readout import TdcParams, TofHistogram, acquire_tof, count_mode, write_histogram_csv

SPAD_PITCH_UM = 10.17
MACROPIXEL_PITCH_UM = 2 * SPAD_PITCH_UM  # 20.34
SPADS_PER_MACROPIXEL = 4


class PixelMode(enum.IntEnum):
    OFF = 0
    PHOTON_COUNTING = 1
    TOF = 2


_MODE_CHARS = {PixelMode.OFF: ".", PixelMode.PHOTON_COUNTING: "C", PixelMode.TOF: "T"}
_CHAR_MODES = {c: m for m, c in _MODE_CHARS.items()}


class ModeMap:
    """Per-macropixel operating mode, ``grid[y, x]``."""

    def __init__(self, grid=None):
        if grid is None:
            grid = np.full((ARRAY_SIDE, ARRAY_SIDE), PixelMode.PHOTON_COUNTING, dtype=np.uint8)
        grid = np.array(grid, dtype=np.uint8)
        if grid.shape != (ARRAY_SIDE, ARRAY_SIDE):
            raise ConfigError(f"mode map must be {ARRAY_SIDE}x{ARRAY_SIDE}, got {grid.shape}")
        if grid.max() > PixelMode.TOF:
            raise ConfigError("mode map holds an unknown mode value")
        self.grid = grid

    @classmethod
    def uniform(cls, mode: PixelMode) -> "ModeMap":
        return cls(np.full((ARRAY_SIDE, ARRAY_SIDE), mode, dtype=np.uint8))

    def __getitem__(self, xy) -> PixelMode:
        x, y = xy
        return PixelMode(int(self.grid[y, x]))

    def __eq__(self, other):
        return isinstance(other, ModeMap) and np.array_equal(self.grid, other.grid)

    def counts(self) -> dict:
        return {m: int(np.count_nonzero(self.grid == m)) for m in PixelMode}

    def with_region(self, region, mode: PixelMode) -> "ModeMap":
        r = Rect.of(region)
        g = self.grid.copy()
        g[r.y:r.y + r.height, r.x:r.x + r.width] = mode
        return ModeMap(g)

    def to_text(self) -> str:
        return "".join("".join(_MODE_CHARS[PixelMode(v)] for v in row) + "\n" for row in self.grid)

    @classmethod
    def from_text(cls, text: str) -> "ModeMap":
        rows = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
        if len(rows) != ARRAY_SIDE or any(len(r) != ARRAY_SIDE for r in rows):
            widths = sorted({len(r) for r in rows})
            raise ConfigError(
                f"mode map must be {ARRAY_SIDE} rows of {ARRAY_SIDE} characters, "
                f"got {len(rows)} rows of width {widths}")
        try:
            grid = [[_CHAR_MODES[c] for c in r] for r in rows]
        except KeyError as exc:
            raise ConfigError(f"mode map character {exc.args[0]!r} is not one of '.', 'C', 'T'") from None
        return cls(grid)


def read_mode_map(path) -> ModeMap:
    return ModeMap.from_text(Path(path).read_text())


def write_mode_map(path, modes: ModeMap) -> None:
    Path(path).write_text(modes.to_text())


class Rect(NamedTuple):
    x: int
    y: int
    width: int
    height: int

    @classmethod
    def of(cls, region) -> "Rect":
        r = cls(*(int(v) for v in region))
        if r.width < 0 or r.height < 0:
            raise OutOfBounds(f"region {tuple(r)} has negative size")
        if r.width and r.height and (r.x < 0 or r.y < 0 or r.x + r.width > ARRAY_SIDE
                                     or r.y + r.height > ARRAY_SIDE):
            raise OutOfBounds(f"region {tuple(r)} does not fit in the {ARRAY_SIDE}x{ARRAY_SIDE} array")
        return r

    def cells(self):
        for y in range(self.y, self.y + self.height):
            for x in range(self.x, self.x + self.width):
                yield x, y


def configure_roi(base: ArrayConfig, region, mode: Mode, lut: Lut16) -> ArrayConfig:
    """Copy of ``base`` with every macropixel in ``region = (x, y, w, h)`` set to ``(lut, mode)``."""
    cfg = MacropixelConfig(lut, mode)
    return base.replace({xy: cfg for xy in Rect.of(region).cells()})


def apply_mode_map(config: ArrayConfig, modes: ModeMap) -> ArrayConfig:
    """Chain-ready config: mode bits follow ``modes``; Off cells become an idle PC LUT."""
    mp = []
    for i, m in enumerate(config.macropixels):
        pm = PixelMode(int(modes.grid.flat[i]))
        if pm == PixelMode.OFF:
            mp.append(MacropixelConfig(Lut16(0), Mode.PHOTON_COUNTING))
        else:
            mp.append(MacropixelConfig(m.lut, Mode.TOF if pm == PixelMode.TOF else Mode.PHOTON_COUNTING))
    return ArrayConfig(tuple(mp))


def macropixel_center_um(x: int, y: int):
    return ((x + 0.5) * MACROPIXEL_PITCH_UM, (y + 0.5) * MACROPIXEL_PITCH_UM)


def macropixels_in_um_region(x0_um, y0_um, x1_um, y1_um) -> list:
    """Macropixels whose centers fall inside a physical rectangle on the sensor."""
    out = []
    for y in range(ARRAY_SIDE):
        for x in range(ARRAY_SIDE):
            cx, cy = macropixel_center_um(x, y)
            if x0_um <= cx < x1_um and y0_um <= cy < y1_um:
                out.append((x, y))
    return out


# --- power -----------------------------------------------------------------

@dataclass(frozen=True)
class PowerParams:
    """Per-macropixel power in each mode (watts) plus a fixed overhead.

    Defaults are placeholders, not measured figures.
    """

    p_tof_w: float = 10e-6
    p_pc_w: float = 2e-6
    p_off_w: float = 0.0
    static_w: float = 0.0

    def __post_init__(self):
        if not self.p_tof_w >= self.p_pc_w >= self.p_off_w >= 0:
            raise ConfigError(
                "power parameters must satisfy p_tof_w >= p_pc_w >= p_off_w >= 0, got "
                f"{self.p_tof_w}, {self.p_pc_w}, {self.p_off_w}")
        if self.static_w < 0:
            raise ConfigError("static_w must be >= 0")

    def per_mode(self, mode: PixelMode) -> float:
        return {PixelMode.OFF: self.p_off_w, PixelMode.PHOTON_COUNTING: self.p_pc_w,
                PixelMode.TOF: self.p_tof_w}[PixelMode(mode)]


def estimate_power(modes: ModeMap, params: PowerParams) -> float:
    n = modes.counts()
    return (params.static_w + n[PixelMode.OFF] * params.p_off_w
            + n[PixelMode.PHOTON_COUNTING] * params.p_pc_w + n[PixelMode.TOF] * params.p_tof_w)


# --- frames ----------------------------------------------------------------

@dataclass
class FrameOutput:
    modes: ModeMap
    duration_ps: int
    seed: int
    counts: np.ndarray = field(default_factory=lambda: np.full((ARRAY_SIDE, ARRAY_SIDE), -1, np.int64))
    histograms: dict = field(default_factory=dict)

    def payload(self, x: int, y: int):
        """Count, histogram or ``None`` according to the macropixel's mode."""
        mode = self.modes[x, y]
        if mode == PixelMode.PHOTON_COUNTING:
            return int(self.counts[y, x])
        if mode == PixelMode.TOF:
            return self.histograms[(x, y)]
        return None


def _run_macropixel(scene: Scene, lut: Lut16, mode: PixelMode, spad: SpadParams,
                    tdc: TdcParams, seed: int, x: int, y: int, counter_bits: int):
    m = y * ARRAY_SIDE + x
    local = scene.at(x, y)
    ids = [m * SPADS_PER_MACROPIXEL + k for k in range(SPADS_PER_MACROPIXEL)]
    root = simulate_lut(spad_streams(local, spad, seed, ids), lut)
    if mode == PixelMode.PHOTON_COUNTING:
        return count_mode(root, 0, local.duration_ps, counter_bits)
    if local.laser is None:
        raise ConfigError("ToF macropixel needs a laser in the scene")
    frames = local.duration_ps // local.laser.period_ps
    return acquire_tof(root, local.laser, tdc, frames)


def _run_rows(args):
    scene, config, modes, spad, tdc, seed, counter_bits, rows = args
    out = []
    for y in rows:
        for x in range(ARRAY_SIDE):
            mode = modes[x, y]
            if mode == PixelMode.OFF:
                continue
            try:
                out.append(((x, y), _run_macropixel(scene, config.at(x, y).lut, mode, spad, tdc,
                                                     seed, x, y, counter_bits)))
            except ConfigError as exc:
                raise ConfigError(f"macropixel {(x, y)}: {exc}") from exc
            except SpadfabError as exc:
                raise SimulationError(str(exc), location=(x, y)) from exc
    return out


def run_array_frame(scene: Scene, config: ArrayConfig, modes: ModeMap, seed: int,
                    spad: SpadParams | None = None, tdc: TdcParams | None = None,
                    counter_bits: int = 14, jobs: int = 1) -> FrameOutput:
    """Simulate one frame of every enabled macropixel.

    The macropixel mode bit in ``config`` must agree with ``modes`` for every
    enabled cell. Results are identical for any ``jobs`` value.
    """
    spad = spad or SpadParams()
    tdc = tdc or TdcParams()
    for i, m in enumerate(config.macropixels):
        pm = PixelMode(int(modes.grid.flat[i]))
        want = {PixelMode.PHOTON_COUNTING: Mode.PHOTON_COUNTING, PixelMode.TOF: Mode.TOF}.get(pm)
        if want is not None and m.mode != want:
            x, y = i % ARRAY_SIDE, i // ARRAY_SIDE
            raise ConfigError(f"macropixel {(x, y)}: mode bit {m.mode.name} disagrees with mode map {pm.name}")
    out = FrameOutput(modes=modes, duration_ps=scene.duration_ps, seed=seed)
    rows = list(range(ARRAY_SIDE))
    if jobs > 1:
        chunks = [rows[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_rows, [(scene, config, modes, spad, tdc, seed, counter_bits, c)
                                              for c in chunks]))
        results = [r for part in parts for r in part]
    else:
        results = _run_rows((scene, config, modes, spad, tdc, seed, counter_bits, rows))
    for (x, y), value in sorted(results, key=lambda r: (r[0][1], r[0][0])):
        if isinstance(value, TofHistogram):
            out.histograms[(x, y)] = value
        else:
            out.counts[y, x] = value
    return out


def write_frame(out_dir, frame: FrameOutput) -> None:
    """``counts.csv`` for photon-counting cells plus one histogram CSV per ToF cell."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["x,y,count"]
    for y in range(ARRAY_SIDE):
        for x in range(ARRAY_SIDE):
            if frame.modes[x, y] == PixelMode.PHOTON_COUNTING:
                lines.append(f"{x},{y},{int(frame.counts[y, x])}")
    (out_dir / "counts.csv").write_text("\n".join(lines) + "\n")
    hist_dir = out_dir / "histograms"
    if frame.histograms:
        hist_dir.mkdir(exist_ok=True)
    for (x, y), hist in sorted(frame.histograms.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        write_histogram_csv(hist_dir / f"mp_{x:02d}_{y:02d}.csv", hist)

