import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spadfab.errors import ConfigError, MalformedStream, OutOfRange
from spadfab.frontend import (BREAKDOWN_VOLTAGE_V, BiasCurve, EdgeStream, Laser, Scene, SpadParams,
                              accept_arrivals, default_bias_curve, generate_arrivals,
                              load_bias_curve, lookup_bias, params_from_bias, read_edge_csv,
                              separate_coincident, shape_pulses, spad_streams, write_edge_csv)

NS = 1000
S = 10**12


def test_params_validation():
    with pytest.raises(ConfigError):
        SpadParams(pde=1.5)
    with pytest.raises(ConfigError):
        SpadParams(dcr_hz=-1)
    with pytest.raises(ConfigError):
        SpadParams(dead_time_ps=10, pulse_width_ps=11)
    with pytest.raises(ConfigError):
        SpadParams(dead_time_ps=10, pulse_width_ps=0)


def test_zero_rates_empty():
    a = generate_arrivals(Scene(0.0, S), SpadParams(dcr_hz=0.0), seed=1, stream_id=0)
    assert a.size == 0


def test_thinned_poisson_count():
    p = SpadParams(pde=0.5, dcr_hz=100.0)
    a = generate_arrivals(Scene(1e6, S), p, seed=2024, stream_id=3)
    expected = 1e6 * 0.5 + 100
    assert abs(a.size - expected) <= 3 * math.sqrt(expected)


def test_laser_arrival_mean():
    laser = Laser(rep_rate_hz=1e3, tof_ps=5 * NS, jitter_sigma_ps=100, signal_photons_per_pulse_mean=1000)
    p = SpadParams(pde=1.0, dcr_hz=0.0)
    a = generate_arrivals(Scene(0.0, S, laser), p, seed=5, stream_id=0)
    rel = a % laser.period_ps
    assert abs(rel.size - 10**6) <= 3 * 1000
    assert abs(rel.mean() - 5 * NS) <= 10
    assert rel.std() == pytest.approx(100, rel=0.02)


def test_arrivals_sorted_and_deterministic():
    scene = Scene(5e7, 10**9, Laser(1e6, 20 * NS, 50, 3.0))
    p = SpadParams(pde=0.4, dcr_hz=1e3)
    a = generate_arrivals(scene, p, 9, 4)
    assert np.all(np.diff(a) >= 0)
    assert np.array_equal(a, generate_arrivals(scene, p, 9, 4))
    assert not np.array_equal(a, generate_arrivals(scene, p, 9, 5))
    assert not np.array_equal(a, generate_arrivals(scene, p, 10, 4))


def test_streams_independent_of_generation_order():
    scene = Scene(1e7, 10**9)
    p = SpadParams()
    forward = [generate_arrivals(scene, p, 3, i) for i in range(8)]
    backward = [generate_arrivals(scene, p, 3, i) for i in reversed(range(8))][::-1]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(lambda i: generate_arrivals(scene, p, 3, i), range(8)))
    for a, b, c in zip(forward, backward, parallel):
        assert np.array_equal(a, b) and np.array_equal(a, c)


def test_shape_pulses_dead_time_loses_second():
    p = SpadParams(dead_time_ps=10 * NS, pulse_width_ps=8 * NS)
    s = shape_pulses([0, 5 * NS], p)
    assert s.times.tolist() == [0, 8 * NS]
    assert s.polarities.tolist() == [1, 0]


def test_shape_pulses_two_pulses():
    p = SpadParams(dead_time_ps=10 * NS, pulse_width_ps=8 * NS)
    assert shape_pulses([0, 12 * NS], p).times.tolist() == [0, 8 * NS, 12 * NS, 20 * NS]


def test_shape_pulses_full_width_pulses_merge():
    p = SpadParams(dead_time_ps=100, pulse_width_ps=100)
    assert shape_pulses([0, 100, 200, 350], p).times.tolist() == [0, 300, 350, 450]


def test_shape_pulses_rejects_unsorted():
    with pytest.raises(MalformedStream):
        shape_pulses([5, 1], SpadParams())


def test_nonparalyzable_rate_formula():
    r, tau = 1e8, 50 * NS
    p = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=tau, pulse_width_ps=10 * NS)
    a = generate_arrivals(Scene(r, 10**10), p, 11, 0)
    accepted = accept_arrivals(a, p).size / 1e-2
    assert accepted == pytest.approx(r / (1 + r * tau * 1e-12), rel=0.02)


def test_paralyzable_rate_formula():
    r, tau = 2e7, 50 * NS
    p = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=tau, pulse_width_ps=10 * NS, paralyzable=True)
    a = generate_arrivals(Scene(r, 10**10), p, 12, 0)
    assert accept_arrivals(a, p).size / 1e-2 == pytest.approx(r * math.exp(-r * tau * 1e-12), rel=0.02)


def test_thinning_identity_without_dead_time():
    p = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=1, pulse_width_ps=1)
    a = generate_arrivals(Scene(1e8, 10**8), p, 1, 0)
    assert np.array_equal(accept_arrivals(a, p), np.unique(a))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 10**6), max_size=200), st.integers(1, 5000), st.data())
def test_shaped_stream_invariants(arrivals, dead, data):
    width = data.draw(st.integers(1, dead))
    p = SpadParams(dead_time_ps=dead, pulse_width_ps=width)
    s = shape_pulses(sorted(arrivals), p)
    s.validate()
    assert len(s) % 2 == 0
    assert np.all(s.polarities[0::2] == 1)
    rises = s.rising
    if rises.size > 1:
        assert np.all(np.diff(rises) >= dead)
    if width < dead:
        assert rises.size == accept_arrivals(np.sort(arrivals), p).size
    if arrivals:
        span = max(arrivals) - min(arrivals)
        assert rises.size <= span // dead + 1


def test_edge_stream_validation():
    with pytest.raises(MalformedStream):
        EdgeStream([0, 5, 5])
    with pytest.raises(MalformedStream):
        EdgeStream.from_edges([(0, "rise"), (5, "rise")])
    s = EdgeStream.from_edges([(0, "rise"), (5, "fall")])
    assert s.level_at([-1, 0, 4, 5]).tolist() == [0, 1, 1, 0]


def test_separate_coincident_breaks_ties():
    a = EdgeStream([10, 20])
    b = EdgeStream([10, 21])
    c = EdgeStream([11, 20])
    out = separate_coincident([a, b, c])
    all_times = np.concatenate([s.times for s in out])
    assert np.unique(all_times).size == all_times.size
    assert out[0].times.tolist() == [10, 20]
    assert out[1].times.tolist() == [11, 22]
    assert out[2].times.tolist() == [12, 21]


def test_spad_streams_no_shared_timestamps():
    scene = Scene(2e8, 10**8)
    p = SpadParams(pde=1.0, dcr_hz=0.0, dead_time_ps=2000, pulse_width_ps=1000)
    streams = spad_streams(scene, p, 4, range(16))
    t = np.concatenate([s.times for s in streams])
    assert np.unique(t).size == t.size
    for s in streams:
        s.validate()


def test_edge_csv_round_trip(tmp_path):
    s = EdgeStream([3, 9, 14, 30])
    write_edge_csv(tmp_path / "e.csv", s)
    assert read_edge_csv(tmp_path / "e.csv") == s
    high = EdgeStream([3, 9, 14], initial=1)
    write_edge_csv(tmp_path / "h.csv", high)
    assert read_edge_csv(tmp_path / "h.csv") == high


# --- bias curves -----------------------------------------------------------

def small_curve():
    rows = [
        (0.5, 1.0, 0.1, 10000, 5000),
        (0.5, 3.0, 0.3, 30000, 15000),
        (1.0, 1.0, 0.1, 6000, 3000),
        (1.0, 3.0, 0.3, 12000, 6000),
    ]
    return BiasCurve.from_rows(rows)


def test_bias_grid_point_exact():
    assert lookup_bias(small_curve(), 0.5, 3.0) == (0.3, 30000.0, 15000.0)


def test_bias_midpoint_mean():
    pde, dead, width = lookup_bias(small_curve(), 0.5, 2.0)
    assert pde == pytest.approx(0.2)
    assert dead == pytest.approx(20000)
    assert width == pytest.approx(10000)
    _, dead_q, _ = lookup_bias(small_curve(), 0.75, 1.0)
    assert dead_q == pytest.approx(8000)


def test_bias_out_of_range():
    with pytest.raises(OutOfRange):
        lookup_bias(small_curve(), 0.4, 2.0)
    with pytest.raises(OutOfRange):
        lookup_bias(small_curve(), 0.5, 3.5)


def test_bias_monotonicity_enforced():
    with pytest.raises(ConfigError):
        BiasCurve.from_rows([(0.5, 1.0, 0.1, 10000, 5000), (0.5, 2.0, 0.2, 9000, 5000)])
    with pytest.raises(ConfigError):
        BiasCurve.from_rows([(0.5, 1.0, 0.3, 10000, 5000), (0.5, 2.0, 0.2, 19000, 5000)])
    with pytest.raises(ConfigError):
        BiasCurve.from_rows([(0.5, 1.0, 0.3, 10000, 5000), (0.6, 2.0, 0.4, 19000, 5000)])


@settings(max_examples=200, deadline=None)
@given(st.floats(0.4, 0.8), st.floats(1.0, 4.0), st.floats(1.0, 4.0))
def test_default_curve_monotone_in_excess_bias(v_q, a, b):
    curve = default_bias_curve()
    lo, hi = sorted((a, b))
    pde_lo, dead_lo, _ = lookup_bias(curve, v_q, lo)
    pde_hi, dead_hi, _ = lookup_bias(curve, v_q, hi)
    assert dead_lo <= dead_hi + 1e-9
    assert pde_lo <= pde_hi + 1e-12


def test_bias_csv(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("# comment\nv_q,v_ex,pde,dead_time_ps,pulse_width_ps\n"
                    "0.5,1,0.1,10000,5000\n0.5,2,0.2,20000,8000\n")
    curve = load_bias_curve(path)
    p = params_from_bias(curve, 0.5, 1.5, dcr_hz=50)
    assert (p.pde, p.dead_time_ps, p.pulse_width_ps, p.dcr_hz) == (pytest.approx(0.15), 15000, 6500, 50)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        load_bias_curve(path)


def test_breakdown_constant_documented():
    assert BREAKDOWN_VOLTAGE_V == 20.0
