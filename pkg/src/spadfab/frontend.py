"""Behavioral SPAD front end: photon arrivals, dead time and output pulses.

Time is integer picoseconds throughout. Each SPAD stream draws from its own
counter-based generator keyed by ``(seed, stream_id)``, so streams can be
produced in any order, or in parallel, with identical results.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .errors import ConfigError, MalformedStream, OutOfRange

PS_PER_S = 10**12

# Observed breakdown voltage of the test-chip SPADs, kept for documentation;
# bias curves are indexed by excess bias above it.
BREAKDOWN_VOLTAGE_V = 20.0


@dataclass(frozen=True)
class SpadParams:
    pde: float = 0.3
    dcr_hz: float = 100.0
    dead_time_ps: int = 20_000
    pulse_width_ps: int = 10_000
    v_ex: float | None = None
    v_q: float | None = None
    paralyzable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dead_time_ps", int(self.dead_time_ps))
        object.__setattr__(self, "pulse_width_ps", int(self.pulse_width_ps))
        if not 0.0 <= self.pde <= 1.0:
            raise ConfigError(f"pde must lie in [0, 1], got {self.pde}")
        if self.dcr_hz < 0:
            raise ConfigError(f"dcr_hz must be >= 0, got {self.dcr_hz}")
        if not 0 < self.pulse_width_ps <= self.dead_time_ps:
            raise ConfigError(
                f"need 0 < pulse_width_ps <= dead_time_ps, got "
                f"{self.pulse_width_ps} and {self.dead_time_ps}")


@dataclass(frozen=True)
class Laser:
    rep_rate_hz: float
    tof_ps: float
    jitter_sigma_ps: float = 0.0
    signal_photons_per_pulse_mean: float = 1.0

    def __post_init__(self):
        if self.rep_rate_hz <= 0:
            raise ConfigError(f"laser rep_rate_hz must be > 0, got {self.rep_rate_hz}")
        if self.tof_ps < 0 or self.jitter_sigma_ps < 0 or self.signal_photons_per_pulse_mean < 0:
            raise ConfigError("laser tof, jitter and photon mean must be >= 0")

    @property
    def period_ps(self) -> int:
        return int(round(PS_PER_S / self.rep_rate_hz))


@dataclass(frozen=True)
class Scene:
    """Stimulus seen by every SPAD.

    ``overrides`` maps ``(x, y)`` macropixel coordinates to dicts of field
    replacements (``background_flux_hz``, ``tof_ps``,
    ``signal_photons_per_pulse_mean``, or ``laser=None`` to switch it off).
    """

    background_flux_hz: float = 0.0
    duration_ps: int = 10**9
    laser: Laser | None = None
    overrides: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "duration_ps", int(self.duration_ps))
        if self.background_flux_hz < 0:
            raise ConfigError("background_flux_hz must be >= 0")
        if self.duration_ps <= 0:
            raise ConfigError("duration_ps must be > 0")

    def at(self, x: int, y: int) -> "Scene":
        """Scene seen by macropixel ``(x, y)`` with its overrides applied."""
        ov = self.overrides.get((x, y))
        if not ov:
            return replace(self, overrides={})
        ov = dict(ov)
        laser = self.laser
        if "laser" in ov:
            laser = ov.pop("laser")
        laser_keys = {"tof_ps", "jitter_sigma_ps", "signal_photons_per_pulse_mean", "rep_rate_hz"}
        laser_ov = {k: ov.pop(k) for k in list(ov) if k in laser_keys}
        if laser_ov:
            if laser is None:
                raise ConfigError(f"override at {(x, y)} sets laser fields but no laser is defined")
            laser = replace(laser, **laser_ov)
        return replace(self, laser=laser, overrides={}, **ov)


class EdgeStream:
    """Transitions of one digital node.

    ``times`` holds strictly increasing edge times in ps. Polarities are
    implied: starting from ``initial`` the level toggles at each edge, so a
    stream starting low begins with a rising edge.
    """

    __slots__ = ("times", "initial")

    def __init__(self, times=(), initial: int = 0, validate: bool = True):
        t = np.asarray(times, dtype=np.int64).ravel()
        t.flags.writeable = False
        self.times = t
        self.initial = int(initial)
        if validate:
            self.validate()

    def validate(self) -> None:
        if self.initial not in (0, 1):
            raise MalformedStream(f"initial level must be 0 or 1, got {self.initial}")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            bad = int(np.argmin(np.diff(self.times) > 0))
            raise MalformedStream(
                f"edge times must be strictly increasing (edge {bad + 1} at {self.times[bad + 1]} ps)")

    @classmethod
    def from_edges(cls, edges, initial: int = 0) -> "EdgeStream":
        """Build from ``(time_ps, polarity)`` pairs, checking alternation."""
        times = []
        level = initial
        for t, pol in edges:
            pol = 1 if pol in (1, "rise", "rising", True) else 0
            if pol == level:
                raise MalformedStream(f"polarity does not alternate at {t} ps")
            level = pol
            times.append(t)
        return cls(times, initial)

    @classmethod
    def from_pulses(cls, pulses) -> "EdgeStream":
        return cls([t for pulse in pulses for t in pulse])

    def __len__(self):
        return int(self.times.size)

    def __eq__(self, other):
        if not isinstance(other, EdgeStream):
            return NotImplemented
        return self.initial == other.initial and np.array_equal(self.times, other.times)

    def __repr__(self):
        head = ", ".join(map(str, self.times[:6]))
        more = ", ..." if len(self) > 6 else ""
        return f"EdgeStream(initial={self.initial}, n={len(self)}, times=[{head}{more}])"

    @property
    def polarities(self) -> np.ndarray:
        """1 for rising, 0 for falling, per edge."""
        return ((np.arange(len(self)) + 1 + self.initial) % 2).astype(np.uint8)

    @property
    def rising(self) -> np.ndarray:
        return self.times[self.initial::2]

    @property
    def falling(self) -> np.ndarray:
        return self.times[1 - self.initial::2]

    @property
    def final_level(self) -> int:
        return (self.initial + len(self)) % 2

    def level_at(self, t) -> np.ndarray:
        """Level just after all edges at or before ``t``."""
        n = np.searchsorted(self.times, t, side="right")
        return ((n + self.initial) % 2).astype(np.uint8)


def _generator(seed: int, stream_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def _strictly_increasing(t: np.ndarray) -> np.ndarray:
    """Push tied times forward by 1 ps steps so that ``t`` strictly increases."""
    if t.size < 2:
        return t
    idx = np.arange(t.size, dtype=np.int64)
    return np.maximum.accumulate(t - idx) + idx


def _uniform_sorted(rng: np.random.Generator, n: int, span: float) -> np.ndarray:
    # Normalized exponential spacings give sorted uniforms in O(n).
    if n == 0:
        return np.empty(0)
    cs = np.cumsum(rng.standard_exponential(n + 1))
    return cs[:-1] / cs[-1] * span


def generate_arrivals(scene: Scene, params: SpadParams, seed: int, stream_id: int) -> np.ndarray:
    """Detected-photon times (ps) for one SPAD, sorted.

    Photons landing in the same picosecond are all kept; the dead time
    admits at most one of them, so shaped streams are still strictly
    increasing. Ties between different SPADs are handled by
    :func:`separate_coincident`.

    Background and dark counts form a Poisson process of rate
    ``flux * pde + dcr``. Each laser pulse at ``p * period`` adds
    ``Poisson(mean * pde)`` arrivals at ``p * period + tof + N(0, jitter)``.
    """
    rng = _generator(seed, stream_id)
    duration = scene.duration_ps
    rate = scene.background_flux_hz * params.pde + params.dcr_hz
    n_bg = int(rng.poisson(rate * duration / PS_PER_S)) if rate > 0 else 0
    parts = [np.floor(_uniform_sorted(rng, n_bg, duration)).astype(np.int64)]

    laser = scene.laser
    mean = laser.signal_photons_per_pulse_mean * params.pde if laser else 0.0
    if laser is not None and mean > 0:
        period = laser.period_ps
        n_pulses = math.ceil(duration / period)
        counts = rng.poisson(mean, n_pulses)
        total = int(counts.sum())
        t = np.repeat(np.arange(n_pulses, dtype=np.int64) * period, counts).astype(np.float64)
        t += laser.tof_ps
        if laser.jitter_sigma_ps > 0:
            t += rng.normal(0.0, laser.jitter_sigma_ps, total)
        t = np.rint(t).astype(np.int64)
        parts.append(t[(t >= 0) & (t < duration)])

    return np.sort(np.concatenate(parts), kind="stable")


@numba.njit(cache=True)
def _nonparalyzable_mask(arrivals, dead_time):
    keep = np.zeros(arrivals.size, dtype=np.bool_)
    next_free = np.iinfo(np.int64).min
    for i in range(arrivals.size):
        if arrivals[i] >= next_free:
            keep[i] = True
            next_free = arrivals[i] + dead_time
    return keep


def accept_arrivals(arrivals, params: SpadParams) -> np.ndarray:
    """Arrival times that survive the SPAD dead time."""
    a = np.ascontiguousarray(arrivals, dtype=np.int64)
    if a.size == 0:
        return a
    if params.paralyzable:
        # every arrival, detected or not, restarts the dead time
        keep = np.empty(a.size, dtype=bool)
        keep[0] = True
        keep[1:] = np.diff(a) >= params.dead_time_ps
        return a[keep]
    return a[_nonparalyzable_mask(a, params.dead_time_ps)]


def shape_pulses(arrivals, params: SpadParams) -> EdgeStream:
    """Output pulse train: rise at each accepted arrival, fall ``pulse_width`` later.

    With ``pulse_width == dead_time`` a pulse can end exactly when the next
    one starts; the output then simply stays high and the two pulses merge.
    """
    a = np.asarray(arrivals, dtype=np.int64)
    if a.size > 1 and np.any(np.diff(a) < 0):
        raise MalformedStream("arrivals must be sorted")
    rise = accept_arrivals(a, params)
    fall = rise + params.pulse_width_ps
    joined = np.zeros(rise.size, dtype=bool)
    joined[1:] = fall[:-1] >= rise[1:]
    if joined.any():
        keep_rise = ~joined
        keep_fall = np.append(~joined[1:], True)
        rise, fall = rise[keep_rise], fall[keep_fall]
    edges = np.empty(2 * rise.size, dtype=np.int64)
    edges[0::2] = rise
    edges[1::2] = fall
    return EdgeStream(edges, validate=False)


def separate_coincident(streams) -> list:
    """Shift edges by whole picoseconds so that no two edges share a time.

    Works across the whole set of streams: edges are visited in (time,
    stream index) order and each is pushed to at least 1 ps after the
    previously placed edge. Per-stream order is preserved.
    """
    streams = list(streams)
    sizes = [len(s) for s in streams]
    if sum(sizes) == 0:
        return streams
    times = np.concatenate([s.times for s in streams])
    # stable sort of the stream-ordered concatenation breaks ties by stream index
    order = np.argsort(times, kind="stable")
    moved = np.empty_like(times)
    moved[order] = _strictly_increasing(times[order])
    out = []
    start = 0
    for s, n in zip(streams, sizes):
        out.append(EdgeStream(moved[start:start + n], s.initial, validate=False))
        start += n
    return out


def spad_streams(scene: Scene, params: SpadParams, seed: int, stream_ids, separate: bool = True) -> list:
    """Shaped edge streams for several SPADs sharing one scene."""
    streams = [shape_pulses(generate_arrivals(scene, params, seed, sid), params) for sid in stream_ids]
    return separate_coincident(streams) if separate else streams


# --- bias curves -----------------------------------------------------------

@dataclass(frozen=True)
class BiasCurve:
    """Rectilinear table ``(v_q, v_ex) -> (pde, dead_time_ps, pulse_width_ps)``."""

    v_q: np.ndarray
    v_ex: np.ndarray
    values: np.ndarray  # shape (len(v_q), len(v_ex), 3)

    def __post_init__(self):
        vq, vex = np.asarray(self.v_q, float), np.asarray(self.v_ex, float)
        vals = np.asarray(self.values, float)
        if vals.shape != (vq.size, vex.size, 3):
            raise ConfigError(f"bias table shape {vals.shape} does not match grid {vq.size}x{vex.size}")
        if np.any(np.diff(vq) <= 0) or np.any(np.diff(vex) <= 0):
            raise ConfigError("bias grid axes must be strictly increasing")
        if np.any(np.diff(vals[:, :, 0], axis=1) < 0):
            raise ConfigError("pde must be non-decreasing in v_ex")
        if np.any(np.diff(vals[:, :, 1], axis=1) < 0):
            raise ConfigError("dead_time_ps must be non-decreasing in v_ex at fixed v_q")
        if np.any(vals[:, :, 0] < 0) or np.any(vals[:, :, 0] > 1):
            raise ConfigError("pde values must lie in [0, 1]")
        if np.any(vals[:, :, 2] <= 0) or np.any(vals[:, :, 2] > vals[:, :, 1]):
            raise ConfigError("need 0 < pulse_width_ps <= dead_time_ps at every grid point")
        object.__setattr__(self, "v_q", vq)
        object.__setattr__(self, "v_ex", vex)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_rows(cls, rows) -> "BiasCurve":
        rows = [tuple(float(v) for v in r) for r in rows]
        if not rows:
            raise ConfigError("bias curve has no rows")
        vq = sorted({r[0] for r in rows})
        vex = sorted({r[1] for r in rows})
        table = {}
        for r in rows:
            if (r[0], r[1]) in table:
                raise ConfigError(f"duplicate bias point v_q={r[0]}, v_ex={r[1]}")
            table[(r[0], r[1])] = r[2:5]
        missing = [(a, b) for a in vq for b in vex if (a, b) not in table]
        if missing:
            raise ConfigError(f"bias grid is not rectangular; missing point {missing[0]}")
        values = np.array([[table[(a, b)] for b in vex] for a in vq])
        return cls(np.array(vq), np.array(vex), values)


def load_bias_curve(path) -> BiasCurve:
    """Read a CSV with columns ``v_q, v_ex, pde, dead_time_ps, pulse_width_ps``.

    Lines starting with ``#`` are comments.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    cols = ["v_q", "v_ex", "pde", "dead_time_ps", "pulse_width_ps"]
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != cols:
        raise ConfigError(f"{path}: expected header {','.join(cols)}")
    try:
        rows = [[float(r[c]) for c in cols] for r in reader]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad number in bias curve ({exc})") from None
    return BiasCurve.from_rows(rows)


def default_bias_curve() -> BiasCurve:
    """Example curve shipped with the package (placeholder, non-physical values)."""
    return load_bias_curve(Path(__file__).with_name("data") / "bias_curve_example.csv")


def _bracket(grid: np.ndarray, v: float, name: str):
    if v < grid[0] or v > grid[-1]:
        raise OutOfRange(f"{name}={v} outside tabulated range [{grid[0]}, {grid[-1]}]")
    if grid.size == 1:
        return 0, 0, 0.0
    i = int(np.clip(np.searchsorted(grid, v, side="right") - 1, 0, grid.size - 2))
    w = (v - grid[i]) / (grid[i + 1] - grid[i])
    return i, i + 1, w


def lookup_bias(curve: BiasCurve, v_q: float, v_ex: float):
    """Bilinear interpolation of ``(pde, dead_time_ps, pulse_width_ps)``."""
    i0, i1, wq = _bracket(curve.v_q, v_q, "v_q")
    j0, j1, we = _bracket(curve.v_ex, v_ex, "v_ex")
    v = curve.values
    out = ((1 - wq) * ((1 - we) * v[i0, j0] + we * v[i0, j1])
           + wq * ((1 - we) * v[i1, j0] + we * v[i1, j1]))
    return float(out[0]), float(out[1]), float(out[2])


def params_from_bias(curve: BiasCurve, v_q: float, v_ex: float, dcr_hz: float = 0.0) -> SpadParams:
    pde, dead, width = lookup_bias(curve, v_q, v_ex)
    dead_ps = int(round(dead))
    return SpadParams(pde=pde, dcr_hz=dcr_hz, dead_time_ps=dead_ps,
                      pulse_width_ps=min(int(round(width)), dead_ps), v_ex=v_ex, v_q=v_q)


# --- CSV replay ------------------------------------------------------------

def write_edge_csv(path, stream: EdgeStream) -> None:
    with open(path, "w", newline="") as fh:
        if stream.initial:
            fh.write("# initial=1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_ps", "polarity"])
        for t, p in zip(stream.times.tolist(), stream.polarities.tolist()):
            w.writerow([t, "rise" if p else "fall"])


def read_edge_csv(path) -> EdgeStream:
    initial = 0
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for ln in fh:
            if ln.startswith("#"):
                if ln.strip().replace(" ", "") == "#initial=1":
                    initial = 1
                continue
            lines.append(ln)
    reader = csv.DictReader(lines)
    if reader.fieldnames != ["time_ps", "polarity"]:
        raise ConfigError(f"{path}: expected header time_ps,polarity")
    for r in reader:
        pol = r["polarity"].strip().lower()
        if pol not in ("rise", "fall", "1", "0"):
            raise MalformedStream(f"{path}: bad polarity {r['polarity']!r}")
        rows.append((int(r["time_ps"]), 1 if pol in ("rise", "1") else 0))
    return EdgeStream.from_edges(rows, initial)
