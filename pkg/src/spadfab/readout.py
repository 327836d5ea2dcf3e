"""Macropixel readout: ripple-counter photon counting and GRO-based TDC.

A TDC code has 14 bits: the 4 low bits are the fine phase of the gated ring
oscillator and the 10 high bits count whole oscillator periods. Time is
measured forward from the opening of the timing window, so the code of a
hit maps directly to its time of flight relative to the window.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, EmptyHistogram
from .frontend import EdgeStream, Laser, Scene, SpadParams

FINE_BITS = 4
COARSE_BITS = 10
CODE_BITS = FINE_BITS + COARSE_BITS
N_CODES = 1 << CODE_BITS  # 16384
MAX_CODE = N_CODES - 1
NO_HIT = None


@dataclass(frozen=True)
class TdcParams:
    gro_period_ps: int = 1600
    window_len_ps: int = 100_000
    window_offset_ps: int = 0
    fine_bits: int = FINE_BITS
    coarse_bits: int = COARSE_BITS
    dnl: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if (self.fine_bits, self.coarse_bits) != (FINE_BITS, COARSE_BITS):
            raise ConfigError("the TDC has exactly 4 fine and 10 coarse bits")
        if self.gro_period_ps <= 0 or self.gro_period_ps % (1 << self.fine_bits):
            raise ConfigError(
                f"gro_period_ps must be a positive multiple of 16, got {self.gro_period_ps}")
        if self.window_len_ps <= 0:
            raise ConfigError("window_len_ps must be > 0")
        if self.full_range_ps < self.window_len_ps:
            raise ConfigError(
                f"window ({self.window_len_ps} ps) exceeds TDC range ({self.full_range_ps} ps)")
        if self.dnl is not None:
            dnl = np.asarray(self.dnl, dtype=float)
            if dnl.shape != (N_CODES,) or np.any(dnl <= -1):
                raise ConfigError("dnl must hold 16384 per-code deviations, each > -1 LSB")
            object.__setattr__(self, "dnl", dnl)

    @property
    def lsb_ps(self) -> int:
        return self.gro_period_ps >> self.fine_bits

    @property
    def full_range_ps(self) -> int:
        return N_CODES * self.lsb_ps

    @property
    def active_codes(self) -> int:
        """Number of codes a hit inside the window can produce."""
        return min(N_CODES, -(-self.window_len_ps // self.lsb_ps))

    def code_edges_ps(self) -> np.ndarray:
        """Lower edge of every code (plus the top edge), relative to window start."""
        widths = np.full(N_CODES, float(self.lsb_ps))
        if self.dnl is not None:
            widths *= 1.0 + self.dnl
        return np.concatenate(([0.0], np.cumsum(widths)))


class TdcCode(NamedTuple):
    coarse: int
    fine: int

    @property
    def code(self) -> int:
        return (self.coarse << FINE_BITS) | self.fine

    @classmethod
    def from_code(cls, code: int) -> "TdcCode":
        return cls(int(code) >> FINE_BITS, int(code) & ((1 << FINE_BITS) - 1))

    def value_ps(self, params: TdcParams) -> int:
        return self.coarse * params.gro_period_ps + self.fine * params.lsb_ps


def convert_offsets(d, params: TdcParams) -> np.ndarray:
    """Codes for offsets ``d >= 0`` from window start, saturating at 16383."""
    d = np.asarray(d, dtype=np.int64)
    if params.dnl is None:
        coarse = d // params.gro_period_ps
        fine = (d % params.gro_period_ps) // params.lsb_ps
        code = (coarse << FINE_BITS) | fine
    else:
        code = np.searchsorted(params.code_edges_ps(), d, side="right") - 1
    return np.minimum(code, MAX_CODE)


def tdc_convert(photon_time_ps: int, window_start_ps: int, params: TdcParams):
    """Convert one hit; returns :data:`NO_HIT` (``None``) outside the window."""
    d = int(photon_time_ps) - int(window_start_ps)
    if d < 0 or d >= params.window_len_ps:
        return NO_HIT
    return TdcCode.from_code(int(convert_offsets(d, params)))


@dataclass
class TofHistogram:
    params: TdcParams
    frames: int = 0
    bins: np.ndarray = field(default_factory=lambda: np.zeros(N_CODES, dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    @property
    def peak_code(self) -> int:
        return int(np.argmax(self.bins))

    def values_ps(self) -> np.ndarray:
        return np.arange(N_CODES, dtype=np.int64) * self.params.lsb_ps

    def merge(self, other: "TofHistogram") -> "TofHistogram":
        return TofHistogram(self.params, self.frames + other.frames, self.bins + other.bins)


def first_hit_codes(root_stream: EdgeStream, laser: Laser, params: TdcParams,
                    frames: int, start_ps: int = 0) -> np.ndarray:
    """Per-frame first-photon code, or -1 for frames without a hit."""
    period = laser.period_ps
    if params.window_offset_ps + params.window_len_ps > period:
        raise ConfigError("timing window extends past the laser period")
    starts = start_ps + np.arange(frames, dtype=np.int64) * period + params.window_offset_ps
    rising = root_stream.rising
    idx = np.searchsorted(rising, starts, side="left")
    padded = np.append(rising, np.iinfo(np.int64).max)
    first = padded[idx]
    hit = first < starts + params.window_len_ps
    codes = np.full(frames, -1, dtype=np.int64)
    codes[hit] = convert_offsets(first[hit] - starts[hit], params)
    return codes


def acquire_tof(root_stream: EdgeStream, laser: Laser, params: TdcParams, frames: int,
                start_ps: int = 0) -> TofHistogram:
    """First-photon histogram: one window per laser period, earliest rising edge wins."""
    codes = first_hit_codes(root_stream, laser, params, frames, start_ps)
    bins = np.bincount(codes[codes >= 0], minlength=N_CODES).astype(np.int64)
    return TofHistogram(params, frames, bins)


def count_mode(root_stream: EdgeStream, t0: int, t1: int, counter_bits: int = 14,
               overflow: str = "wrap") -> int:
    """Ripple-counter reading of the rising edges in ``[t0, t1)``."""
    if not t0 < t1:
        raise ConfigError(f"window needs t0 < t1, got [{t0}, {t1})")
    r = root_stream.rising
    n = int(np.searchsorted(r, t1, side="left") - np.searchsorted(r, t0, side="left"))
    if overflow == "wrap":
        return n % (1 << counter_bits)
    if overflow == "saturate":
        return min(n, (1 << counter_bits) - 1)
    raise ConfigError(f"unknown overflow policy {overflow!r}")


def _split(hist: TofHistogram, signal_window):
    lo, hi = int(signal_window[0]), int(signal_window[1])
    n_active = hist.params.active_codes
    if not 0 <= lo < hi <= n_active:
        raise ConfigError(f"signal window [{lo}, {hi}) must be non-empty within [0, {n_active})")
    if hist.total == 0:
        raise EmptyHistogram("histogram has no counts")
    s = int(hist.bins[lo:hi].sum())
    b = int(hist.bins[:n_active].sum()) - s
    return s, hi - lo, b, n_active - (hi - lo)


def histogram_sbr(hist: TofHistogram, signal_window) -> float:
    """Per-bin signal-to-background ratio ``(S/|Ws|) / (B/|Wb|)``.

    ``signal_window`` is a half-open code range ``(lo, hi)``; background bins
    are the remaining codes reachable inside the timing window. Returns
    ``math.inf`` when there is no background count.
    """
    s, ws, b, wb = _split(hist, signal_window)
    if b == 0:
        return math.inf
    return (s / ws) / (b / wb)


def histogram_sbr_sigma(hist: TofHistogram, signal_window) -> float:
    """Standard error of :func:`histogram_sbr`, treating S and B as Poisson counts."""
    s, _, b, _ = _split(hist, signal_window)
    if b == 0 or s == 0:
        return math.inf if b == 0 else 0.0
    return histogram_sbr(hist, signal_window) * math.sqrt(1.0 / s + 1.0 / b)


def first_photon_pmf(bin_means) -> np.ndarray:
    """Probability that the first event of a frame lands in each bin.

    ``bin_means`` is the expected number of Poisson events per bin.
    """
    mu = np.asarray(bin_means, dtype=float)
    survive = np.exp(-np.concatenate(([0.0], np.cumsum(mu)[:-1])))
    return survive * -np.expm1(-mu)


def expected_bin_means(params: TdcParams, scene: Scene, spad: SpadParams) -> np.ndarray:
    """Expected detections per active code for one SPAD, ignoring dead time."""
    from scipy.stats import norm

    n = params.active_codes
    lo = params.window_offset_ps + np.arange(n) * params.lsb_ps
    hi = np.minimum(lo + params.lsb_ps, params.window_offset_ps + params.window_len_ps)
    rate = scene.background_flux_hz * spad.pde + spad.dcr_hz
    mu = rate * (hi - lo) * 1e-12
    laser = scene.laser
    if laser is not None:
        mean = laser.signal_photons_per_pulse_mean * spad.pde
        if laser.jitter_sigma_ps > 0:
            # arrival times are rounded to whole ps
            c = norm.cdf(hi - 0.5, laser.tof_ps, laser.jitter_sigma_ps)
            c -= norm.cdf(lo - 0.5, laser.tof_ps, laser.jitter_sigma_ps)
        else:
            t = round(laser.tof_ps)
            c = ((lo <= t) & (t < hi)).astype(float)
        mu = mu + mean * c
    return mu


def write_histogram_csv(path, hist: TofHistogram) -> None:
    n = hist.params.active_codes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "value_ps", "count"])
        values = hist.values_ps()
        for code in range(n):
            w.writerow([code, int(values[code]), int(hist.bins[code])])


def histogram_summary(hist: TofHistogram, signal_window=None) -> str:
    """JSON summary: frames, total hits, SBR, peak bin."""
    summary = {
        "frames": hist.frames,
        "total_hits": hist.total,
        "peak_code": hist.peak_code,
        "peak_value_ps": int(hist.peak_code * hist.params.lsb_ps),
    }
    if signal_window is not None and hist.total:
        sbr = histogram_sbr(hist, signal_window)
        summary["sbr"] = "inf" if math.isinf(sbr) else round(sbr, 6)
        summary["signal_window"] = [int(signal_window[0]), int(signal_window[1])]
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
