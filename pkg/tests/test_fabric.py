import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spadfab.errors import ConfigError, InvalidClock, WrongLength
from spadfab.fabric import (ARRAY_BITS, ARRAY_SIZE, ArrayConfig, BitChain, Lut16, MacropixelConfig,
                            Mode, TestChipConfig, decode_array, decode_macropixel, decode_test_chip,
                            encode_array, encode_macropixel, encode_test_chip, eval_lut,
                            programming_time, read_bitstream, write_bitstream)

luts = st.integers(0, 0xFFFF).map(Lut16)
chips = st.builds(lambda leaves, root: TestChipConfig(tuple(leaves), root),
                  st.lists(luts, min_size=4, max_size=4), luts)
macropixels = st.builds(MacropixelConfig, luts, st.sampled_from(list(Mode)))


def test_lut_rejects_out_of_range():
    with pytest.raises(ConfigError):
        Lut16(0x10000)
    with pytest.raises(ConfigError):
        Lut16(-1)


def test_eval_lut_row_index_x0_lsb():
    lut = Lut16(1 << 0b1010)  # only row x1=1, x3=1
    assert eval_lut(lut, [0, 1, 0, 1]) == 1
    assert eval_lut(lut, [1, 0, 1, 0]) == 0


def test_test_chip_stores_80_bits():
    assert TestChipConfig().stored_bits == 80


def test_encode_test_chip_zero():
    chain = encode_test_chip(TestChipConfig())
    assert len(chain) == 80
    assert not chain.bits.any()


def test_encode_test_chip_order():
    leaves = (Lut16(0x0001), Lut16(0), Lut16(0), Lut16(0))
    chain = encode_test_chip(TestChipConfig(leaves, Lut16(0x8000)))
    assert np.flatnonzero(chain.bits).tolist() == [0, 79]


def test_or_tree_round_trip():
    cfg = TestChipConfig((Lut16(0xFFFE),) * 4, Lut16(0xFFFE))
    assert decode_test_chip(encode_test_chip(cfg)) == cfg


def test_decode_all_ones():
    cfg = decode_test_chip(BitChain(np.ones(80)))
    assert all(lut.bits == 0xFFFF for lut in cfg.luts)


def test_decode_wrong_length():
    with pytest.raises(WrongLength):
        decode_test_chip(BitChain(np.zeros(79)))
    with pytest.raises(WrongLength):
        decode_array(BitChain(np.zeros(ARRAY_BITS - 1)))
    with pytest.raises(WrongLength):
        decode_macropixel(BitChain(np.zeros(16)))


@settings(max_examples=1000, deadline=None)
@given(chips)
def test_test_chip_round_trip(cfg):
    chain = encode_test_chip(cfg)
    assert len(chain) == 80
    assert decode_test_chip(chain) == cfg


@settings(max_examples=1000, deadline=None)
@given(macropixels)
def test_macropixel_round_trip(cfg):
    chain = encode_macropixel(cfg)
    assert len(chain) == 17
    assert chain.bits[16] == int(cfg.mode)
    assert decode_macropixel(chain) == cfg


def _random_array(rng):
    vals = rng.integers(0, 0x10000, ARRAY_SIZE)
    modes = rng.integers(0, 2, ARRAY_SIZE)
    return ArrayConfig(tuple(MacropixelConfig(Lut16(int(v)), Mode(int(m))) for v, m in zip(vals, modes)))


def test_array_round_trip_random():
    rng = np.random.default_rng(7)
    for _ in range(100):
        cfg = _random_array(rng)
        chain = encode_array(cfg)
        assert len(chain) == ARRAY_BITS == 17408
        assert decode_array(chain) == cfg


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, ARRAY_SIZE - 1), macropixels)
def test_array_round_trip_single_cell(index, mp):
    cfg = ArrayConfig().replace({(index % 32, index // 32): mp})
    assert decode_array(encode_array(cfg)) == cfg


def test_encode_array_zero():
    assert not encode_array(ArrayConfig()).bits.any()


def test_encode_array_single_tof_bit():
    cfg = ArrayConfig().replace({(0, 0): MacropixelConfig(Lut16(0), Mode.TOF)})
    assert np.flatnonzero(encode_array(cfg).bits).tolist() == [16]


def test_encode_array_row_major():
    cfg = ArrayConfig().replace({(1, 0): MacropixelConfig(Lut16(0), Mode.TOF),
                                 (0, 1): MacropixelConfig(Lut16(0), Mode.TOF)})
    assert np.flatnonzero(encode_array(cfg).bits).tolist() == [17 + 16, 32 * 17 + 16]


@pytest.mark.parametrize("bits,clock,expected", [
    (80, 100e6, 800e-9),
    (17408, 10e6, 1.7408e-3),
    (17, 10e6, 1.7e-6),
])
def test_programming_time(bits, clock, expected):
    assert programming_time(bits, clock) == pytest.approx(expected, rel=1e-12, abs=0)


@pytest.mark.parametrize("clock", [0, -1.0])
def test_programming_time_invalid_clock(clock):
    with pytest.raises(InvalidClock):
        programming_time(80, clock)


@given(st.integers(0, 10**6), st.floats(1e3, 1e9))
def test_programming_time_linear(bits, clock):
    assert programming_time(2 * bits, clock) == pytest.approx(2 * programming_time(bits, clock))
    assert programming_time(bits, 2 * clock) == pytest.approx(programming_time(bits, clock) / 2)


def test_hex_msb_first():
    chain = BitChain([1, 0, 0, 0, 0, 0, 0, 0])
    assert chain.to_hex() == "80"
    odd = BitChain([1, 0, 1, 1, 0])  # padded on the left to 8 bits
    assert odd.to_hex() == "16"
    assert BitChain.from_hex("16", 5) == odd


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=200))
def test_hex_round_trip(bits):
    chain = BitChain(bits)
    assert BitChain.from_hex(chain.to_hex(), len(bits)) == chain


def test_bitstream_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    chain = encode_array(_random_array(rng))
    path = tmp_path / "a.bit"
    write_bitstream(path, chain)
    lines = path.read_text().splitlines()
    assert lines[0] == "SPADFAB1 17408"
    assert len(lines[1]) == 17408 // 4
    assert read_bitstream(path) == chain


def test_bitstream_bad_header(tmp_path):
    path = tmp_path / "bad.bit"
    path.write_text("NOPE 80\n00\n")
    with pytest.raises(ConfigError):
        read_bitstream(path)
    path.write_text("SPADFAB1 80\n00\n")
    with pytest.raises(WrongLength):
        read_bitstream(path)
