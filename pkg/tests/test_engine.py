import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pulse_stream
from spadfab.compiler import Coincidence, NetworkSpec, Or, Passthrough, Xor, compile_lut, compile_network
from spadfab.engine import (N_SPADS, count_rising_edges, network_table, oracle_discretized,
                            simulate_lut, simulate_network)
from spadfab.errors import ConfigError, MalformedStream
from spadfab.fabric import Lut16, TestChipConfig
from spadfab.frontend import EdgeStream, Scene, SpadParams, shape_pulses, spad_streams

NS = 1000
OR_TREE = compile_network(NetworkSpec((Or(),) * 4, Or()))
XOR_TREE = compile_network(NetworkSpec((Xor(),) * 4, Xor()))


def inputs_with(**pulses):
    streams = [EdgeStream()] * N_SPADS
    for key, edges in pulses.items():
        streams[int(key[1:])] = EdgeStream(edges)
    return streams


def test_or_single_pulse():
    out = simulate_network(inputs_with(s7=[100, 200]), OR_TREE)
    assert out.times.tolist() == [100, 200]
    assert out.initial == 0


def test_or_merges_overlapping_pulses():
    out = simulate_network(inputs_with(s0=[0, 10 * NS], s1=[5 * NS, 15 * NS]), OR_TREE)
    assert out.times.tolist() == [0, 15 * NS]


def test_xor_five_pulses_two_spads():
    a = [0, 100, 1000, 1100, 5000, 5100]
    b = [300, 400, 2000, 2500]
    inputs = inputs_with(s2=a, s13=b)
    out = simulate_network(inputs, XOR_TREE)
    assert out.rising.tolist() == [0, 300, 1000, 2000, 5000]
    assert out == oracle_discretized(inputs, XOR_TREE, 1)


def test_root_coincidence_of_leaf_passthroughs():
    cfg = compile_network(NetworkSpec((Passthrough(0),) * 4, Coincidence(2)))
    inputs = inputs_with(s0=[100, 900], s4=[400, 1500], s1=[0, 2000])
    out = simulate_network(inputs, cfg)
    assert out.times.tolist() == [400, 900]
    assert out == oracle_discretized(inputs, cfg, 1)


def test_simultaneous_edges_are_glitch_free():
    # SPAD 0 falls exactly when SPAD 1 rises: XOR never sees both, OR stays high
    inputs = inputs_with(s0=[0, 50], s1=[50, 90])
    assert simulate_network(inputs, OR_TREE).times.tolist() == [0, 90]
    assert simulate_network(inputs, XOR_TREE).times.tolist() == [0, 90]


def test_empty_inputs():
    assert len(simulate_network(inputs_with(), OR_TREE)) == 0
    assert len(oracle_discretized(inputs_with(), OR_TREE, 1)) == 0


def test_constant_high_root_starts_high():
    cfg = TestChipConfig((Lut16(0),) * 4, Lut16(0x0001))  # NOR of leaves
    out = simulate_network(inputs_with(s0=[10, 20]), TestChipConfig((Lut16(0xFFFE),) * 4, Lut16(0x0001)))
    assert out.initial == 1 and out.times.tolist() == [10, 20]
    assert simulate_network(inputs_with(), cfg).initial == 1


def test_malformed_input_rejected():
    bad = inputs_with()
    bad[3] = EdgeStream([5, 3], validate=False)
    with pytest.raises(MalformedStream):
        simulate_network(bad, OR_TREE)
    with pytest.raises(ConfigError):
        simulate_network(bad[:15], OR_TREE)


def test_network_table_matches_composition():
    rng = np.random.default_rng(0)
    cfg = TestChipConfig(tuple(Lut16(int(v)) for v in rng.integers(0, 1 << 16, 4)),
                         Lut16(int(rng.integers(0, 1 << 16))))
    table = network_table(cfg)
    for s in rng.integers(0, 1 << 16, 500):
        leaves = [cfg.leaf_luts[j]([(s >> (4 * j + k)) & 1 for k in range(4)]) for j in range(4)]
        assert table[s] == cfg.root_lut(leaves)


def random_config(rng):
    return TestChipConfig(tuple(Lut16(int(v)) for v in rng.integers(0, 1 << 16, 4)),
                          Lut16(int(rng.integers(0, 1 << 16))))


@pytest.mark.parametrize("seed", range(10))
def test_engine_matches_oracle_random(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    inputs = [random_pulse_stream(rng, 200_000, 5e7, 20_000) for _ in range(N_SPADS)]
    assert simulate_network(inputs, cfg) == oracle_discretized(inputs, cfg, 1)


def test_oracle_coarse_grid_on_aligned_edges():
    inputs = inputs_with(s0=[100, 300], s5=[200, 600])
    assert oracle_discretized(inputs, OR_TREE, 100) == simulate_network(inputs, OR_TREE)


def test_simulate_lut_matches_single_network_leaf():
    rng = np.random.default_rng(5)
    lut = Lut16(0xE8E8)
    streams = [random_pulse_stream(rng, 100_000, 1e8, 5000) for _ in range(4)]
    cfg = TestChipConfig((lut, Lut16(0), Lut16(0), Lut16(0)), compile_lut(Passthrough(0)))
    padded = streams + [EdgeStream()] * 12
    assert simulate_lut(streams, lut) == simulate_network(padded, cfg)


def test_count_rising_edges():
    assert count_rising_edges(EdgeStream(), 0, 10) == 0
    s = EdgeStream.from_pulses([(1000 * NS, 1500 * NS), (2000 * NS, 2100 * NS), (3000 * NS, 3001 * NS)])
    assert count_rising_edges(s, 0, 2500 * NS) == 2
    assert count_rising_edges(s, 2000 * NS, 3000 * NS) == 1
    with pytest.raises(ConfigError):
        count_rising_edges(s, 5, 5)


def _chip_inputs(seed, flux=2e7, duration=10**7, width=3 * NS):
    p = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=2 * width, pulse_width_ps=width)
    return spad_streams(Scene(flux, duration), p, seed, range(N_SPADS))


@pytest.mark.parametrize("seed", range(5))
def test_xor_identity(seed):
    inputs = _chip_inputs(seed)
    total = sum(len(s.rising) for s in inputs)
    out = simulate_network(inputs, XOR_TREE)
    assert count_rising_edges(out, 0, 10**8) == total


@pytest.mark.parametrize("seed", range(5))
def test_or_bound(seed):
    inputs = _chip_inputs(seed)
    total = sum(len(s.rising) for s in inputs)
    out = simulate_network(inputs, OR_TREE)
    assert len(out.rising) <= total
    sparse = _chip_inputs(seed, flux=1e5, duration=10**8)
    intervals = sorted((s.times[i], s.times[i + 1]) for s in sparse for i in range(0, len(s), 2))
    overlap = any(b[0] <= a[1] for a, b in zip(intervals, intervals[1:]))
    n = len(simulate_network(sparse, OR_TREE).rising)
    assert (n == len(intervals)) == (not overlap)


def test_or_saturation_monotone_in_pulse_width():
    p0 = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=40 * NS, pulse_width_ps=1 * NS)
    from spadfab.frontend import generate_arrivals
    arrivals = [generate_arrivals(Scene(2e7, 10**8), p0, 3, i) for i in range(N_SPADS)]
    counts = []
    for width in (1, 2, 5, 10, 20, 40):
        p = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=40 * NS, pulse_width_ps=width * NS)
        streams = [shape_pulses(a, p) for a in arrivals]
        counts.append(len(simulate_network(streams, OR_TREE).rising))
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] > counts[-1]


def permute_lut(lut: Lut16, perm) -> Lut16:
    """Table seen when input ``k`` is rewired to position ``perm[k]``."""
    bits = 0
    for row in range(16):
        new_row = 0
        for k in range(4):
            new_row |= ((row >> k) & 1) << perm[k]
        bits |= lut.row(row) << new_row
    return Lut16(bits)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(4)), st.lists(st.permutations(range(4)), min_size=4, max_size=4),
       st.integers(0, 2**32 - 1))
def test_permutation_invariance(leaf_perm, input_perms, seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    inputs = [random_pulse_stream(rng, 50_000, 1e8, 5000) for _ in range(N_SPADS)]
    new_inputs = [None] * N_SPADS
    new_leaves = [None] * 4
    for j in range(4):
        for k in range(4):
            new_inputs[4 * leaf_perm[j] + input_perms[j][k]] = inputs[4 * j + k]
        new_leaves[leaf_perm[j]] = permute_lut(cfg.leaf_luts[j], input_perms[j])
    new_cfg = TestChipConfig(tuple(new_leaves), permute_lut(cfg.root_lut, leaf_perm))
    assert simulate_network(new_inputs, new_cfg) == simulate_network(inputs, cfg)
