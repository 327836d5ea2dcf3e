"""Continuous-time evaluation of LUT networks driven by SPAD edge streams.

LUTs are zero-delay combinational functions of their instantaneous input
levels. Events are processed in time order; every edge sharing one
timestamp is applied before the network is re-evaluated, so simultaneous
toggles never produce glitches.

:func:`oracle_discretized` is an independent brute-force reference that
samples every input on a fixed grid and evaluates each LUT in turn.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, MalformedStream
from .fabric import LUT_INPUTS, Lut16, TestChipConfig
from .frontend import EdgeStream

N_SPADS = 16


def _check_inputs(inputs, expected: int) -> list:
    inputs = list(inputs)
    if len(inputs) != expected:
        raise ConfigError(f"expected {expected} input streams, got {len(inputs)}")
    for i, s in enumerate(inputs):
        if not isinstance(s, EdgeStream):
            raise MalformedStream(f"input {i} is not an EdgeStream")
        try:
            s.validate()
        except MalformedStream as exc:
            raise MalformedStream(f"input {i}: {exc}") from None
    return inputs


def merged_states(inputs):
    """Time-ordered input states after each distinct event time.

    Returns ``(times, states, initial_state)`` where bit ``j`` of a state is
    the level of input ``j``.
    """
    initial = 0
    for j, s in enumerate(inputs):
        initial |= s.initial << j
    sizes = [len(s) for s in inputs]
    if sum(sizes) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), initial
    times = np.concatenate([s.times for s in inputs])
    toggles = np.repeat(np.left_shift(1, np.arange(len(inputs), dtype=np.int64)), sizes)
    order = np.argsort(times, kind="stable")
    t = times[order]
    states = initial ^ np.bitwise_xor.accumulate(toggles[order])
    last_of_group = np.append(t[1:] != t[:-1], True)
    return t[last_of_group], states[last_of_group], initial


def network_table(config: TestChipConfig) -> np.ndarray:
    """Root output for each of the 65536 states of the 16 SPAD inputs."""
    s = np.arange(1 << N_SPADS, dtype=np.int64)
    root_index = np.zeros_like(s)
    for j, leaf in enumerate(config.leaf_luts):
        root_index |= ((leaf.bits >> ((s >> (4 * j)) & 0xF)) & 1) << j
    return ((config.root_lut.bits >> root_index) & 1).astype(np.uint8)


def _drive(inputs, table: np.ndarray) -> EdgeStream:
    times, states, initial = merged_states(inputs)
    start = int(table[initial])
    if times.size == 0:
        return EdgeStream((), start, validate=False)
    levels = table[states]
    previous = np.concatenate(([start], levels[:-1]))
    return EdgeStream(times[levels != previous], start, validate=False)


def simulate_network(inputs, config: TestChipConfig) -> EdgeStream:
    """Root output of the two-level test chip for 16 SPAD streams.

    SPAD ``4*j + k`` drives input ``k`` of leaf ``j``; leaf ``j`` drives root
    input ``j``.
    """
    inputs = _check_inputs(inputs, N_SPADS)
    return _drive(inputs, network_table(config))


def simulate_lut(inputs, lut: Lut16) -> EdgeStream:
    """Output of a single LUT over up to four input streams (missing ones idle low)."""
    inputs = list(inputs)
    if len(inputs) > LUT_INPUTS:
        raise ConfigError(f"a LUT has {LUT_INPUTS} inputs, got {len(inputs)} streams")
    inputs = inputs + [EdgeStream()] * (LUT_INPUTS - len(inputs))
    inputs = _check_inputs(inputs, LUT_INPUTS)
    return _drive(inputs, lut.table())


def _eval_sampled(levels: np.ndarray, config: TestChipConfig) -> np.ndarray:
    """Network output for sampled levels of shape (16, n_samples)."""
    root_index = np.zeros(levels.shape[1], dtype=np.int64)
    for j, leaf in enumerate(config.leaf_luts):
        leaf_index = np.zeros(levels.shape[1], dtype=np.int64)
        for k in range(LUT_INPUTS):
            leaf_index |= levels[4 * j + k].astype(np.int64) << k
        root_index |= ((leaf.bits >> leaf_index) & 1) << j
    return ((config.root_lut.bits >> root_index) & 1).astype(np.uint8)


def oracle_discretized(inputs, config: TestChipConfig, dt_ps: int = 1,
                       horizon_ps: int | None = None) -> EdgeStream:
    """Sample-and-evaluate reference for :func:`simulate_network`.

    Inputs are sampled at ``0, dt, 2 dt, ...`` up to ``horizon_ps`` (default:
    the latest input edge). An output edge is emitted at each sample whose
    root level differs from the previous sample.
    """
    if dt_ps < 1:
        raise ConfigError(f"dt_ps must be >= 1, got {dt_ps}")
    inputs = _check_inputs(inputs, N_SPADS)
    initial_levels = np.array([[s.initial] for s in inputs], dtype=np.uint8)
    start = int(_eval_sampled(initial_levels, config)[0])
    if horizon_ps is None:
        horizon_ps = max((int(s.times[-1]) for s in inputs if len(s)), default=-1)
    if horizon_ps < 0:
        return EdgeStream((), start, validate=False)
    samples = np.arange(0, horizon_ps + 1, dt_ps, dtype=np.int64)
    levels = np.stack([s.level_at(samples) for s in inputs])
    out = _eval_sampled(levels, config)
    previous = np.concatenate(([start], out[:-1]))
    return EdgeStream(samples[out != previous], start, validate=False)


def count_rising_edges(stream: EdgeStream, t0: int, t1: int) -> int:
    """Rising edges with ``t0 <= t < t1``."""
    if not t0 < t1:
        raise ConfigError(f"window needs t0 < t1, got [{t0}, {t1})")
    r = stream.rising
    return int(np.searchsorted(r, t1, side="left") - np.searchsorted(r, t0, side="left"))
