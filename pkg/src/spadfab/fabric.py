"""Configuration plane of the reconfigurable SPAD fabric.

A :class:`Lut16` is a 4-input truth table. The test chip chains five of them
(four leaves plus one root, 80 bits). The imaging array chains 1024
macropixels of 17 bits each (16 LUT bits then one mode bit), 17408 bits in
total. All chains are shifted in one bit per clock cycle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidClock, WrongLength

LUT_BITS = 16
LUT_INPUTS = 4
TEST_CHIP_LEAVES = 4
TEST_CHIP_BITS = (TEST_CHIP_LEAVES + 1) * LUT_BITS  # 80
MACROPIXEL_BITS = LUT_BITS + 1  # 17
ARRAY_SIDE = 32
ARRAY_SIZE = ARRAY_SIDE * ARRAY_SIDE  # 1024
ARRAY_BITS = ARRAY_SIZE * MACROPIXEL_BITS  # 17408

BITSTREAM_MAGIC = "SPADFAB1"


@dataclass(frozen=True)
class Lut16:
    """16-entry truth table over inputs ``x0..x3``.

    Bit ``i`` of :attr:`bits` is the output for the input row whose binary
    value is ``i`` with ``x0`` as least significant bit.
    """

    bits: int = 0

    def __post_init__(self):
        if isinstance(self.bits, bool) or not isinstance(self.bits, (int, np.integer)):
            raise ConfigError(f"LUT bits must be an integer, got {self.bits!r}")
        if not 0 <= int(self.bits) <= 0xFFFF:
            raise ConfigError(f"LUT value {self.bits:#x} does not fit in 16 bits")
        object.__setattr__(self, "bits", int(self.bits))

    def __call__(self, inputs) -> int:
        return eval_lut(self, inputs)

    def row(self, index: int) -> int:
        return (self.bits >> index) & 1

    def table(self) -> np.ndarray:
        """Outputs for rows 0..15 as a uint8 array."""
        return ((self.bits >> np.arange(LUT_BITS)) & 1).astype(np.uint8)

    def to_bits(self) -> np.ndarray:
        # Chain order: truth-table index 0 first.
        return self.table()

    @classmethod
    def from_bits(cls, bits) -> "Lut16":
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size != LUT_BITS:
            raise WrongLength(f"a LUT needs {LUT_BITS} bits, got {bits.size}")
        return cls(int(np.sum(bits.astype(np.int64) << np.arange(LUT_BITS))))

    def __str__(self):
        return f"0x{self.bits:04X}"


def eval_lut(lut: Lut16, inputs) -> int:
    """Output of ``lut`` for the four input levels ``inputs = [x0, x1, x2, x3]``."""
    x = list(inputs)
    if len(x) != LUT_INPUTS:
        raise ConfigError(f"a LUT takes {LUT_INPUTS} inputs, got {len(x)}")
    index = 0
    for j, v in enumerate(x):
        index |= (1 if v else 0) << j
    return (lut.bits >> index) & 1


class Mode(enum.IntEnum):
    """Readout mode stored in the 17th macropixel bit."""

    PHOTON_COUNTING = 0
    TOF = 1


@dataclass(frozen=True)
class TestChipConfig:
    """Two-level test chip: four leaf LUTs (4 SPADs each) feeding one root LUT."""

    __test__ = False  # keep pytest from collecting this as a test class

    leaf_luts: tuple = (Lut16(), Lut16(), Lut16(), Lut16())
    root_lut: Lut16 = Lut16()

    def __post_init__(self):
        leaves = tuple(self.leaf_luts)
        if len(leaves) != TEST_CHIP_LEAVES:
            raise ConfigError(f"test chip has {TEST_CHIP_LEAVES} leaf LUTs, got {len(leaves)}")
        object.__setattr__(self, "leaf_luts", leaves)

    @property
    def luts(self) -> tuple:
        return self.leaf_luts + (self.root_lut,)

    @property
    def stored_bits(self) -> int:
        return len(self.luts) * LUT_BITS


@dataclass(frozen=True)
class MacropixelConfig:
    lut: Lut16 = Lut16()
    mode: Mode = Mode.PHOTON_COUNTING

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass(frozen=True)
class ArrayConfig:
    """32x32 grid of macropixel configurations, stored row-major.

    Index ``y * 32 + x`` addresses the macropixel at column ``x``, row ``y``.
    """

    macropixels: tuple = field(default_factory=lambda: (MacropixelConfig(),) * ARRAY_SIZE)

    def __post_init__(self):
        mp = tuple(self.macropixels)
        if len(mp) != ARRAY_SIZE:
            raise ConfigError(f"array config needs {ARRAY_SIZE} macropixels, got {len(mp)}")
        object.__setattr__(self, "macropixels", mp)

    @classmethod
    def uniform(cls, lut: Lut16, mode: Mode = Mode.PHOTON_COUNTING) -> "ArrayConfig":
        return cls((MacropixelConfig(lut, mode),) * ARRAY_SIZE)

    def at(self, x: int, y: int) -> MacropixelConfig:
        return self.macropixels[y * ARRAY_SIDE + x]

    def replace(self, updates: dict) -> "ArrayConfig":
        """Copy with ``{(x, y): MacropixelConfig}`` entries substituted."""
        mp = list(self.macropixels)
        for (x, y), cfg in updates.items():
            mp[y * ARRAY_SIDE + x] = cfg
        return ArrayConfig(tuple(mp))


class BitChain:
    """Ordered bit vector shifted into a configuration chain, index 0 first."""

    def __init__(self, bits=()):
        arr = np.asarray(bits, dtype=np.int64).ravel()
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ConfigError("bit chain entries must be 0 or 1")
        self.bits = arr.astype(np.uint8)
        self.bits.flags.writeable = False

    def __len__(self):
        return int(self.bits.size)

    @property
    def length(self) -> int:
        return len(self)

    def __eq__(self, other):
        if not isinstance(other, BitChain):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"BitChain(length={len(self)}, hex={self.to_hex()})"

    def to_hex(self) -> str:
        """Hex digits with chain bit 0 as the most significant bit.

        The chain is left-padded with zeros to a whole number of nibbles.
        """
        n = len(self)
        if n == 0:
            return ""
        pad = (-n) % 4
        padded = np.concatenate([np.zeros(pad, np.uint8), self.bits])
        nibbles = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1])
        return "".join("0123456789ABCDEF"[v] for v in nibbles)

    @classmethod
    def from_hex(cls, text: str, length: int) -> "BitChain":
        text = text.strip()
        pad = (-length) % 4
        if len(text) != (length + pad) // 4:
            raise WrongLength(f"{len(text)} hex digits cannot hold exactly {length} bits")
        try:
            nibbles = [int(c, 16) for c in text]
        except ValueError:
            raise ConfigError(f"invalid hex digit in bitstream: {text!r}") from None
        bits = ((np.array(nibbles, dtype=np.int64).reshape(-1, 1) >> np.array([3, 2, 1, 0])) & 1).ravel()
        if bits[:pad].any():
            raise ConfigError("nonzero padding bits in bitstream")
        return cls(bits[pad:])


def encode_test_chip(config: TestChipConfig) -> BitChain:
    return BitChain(np.concatenate([lut.to_bits() for lut in config.luts]))


def decode_test_chip(chain: BitChain) -> TestChipConfig:
    if len(chain) != TEST_CHIP_BITS:
        raise WrongLength(f"test chip chain needs {TEST_CHIP_BITS} bits, got {len(chain)}")
    luts = [Lut16.from_bits(chain.bits[i * LUT_BITS:(i + 1) * LUT_BITS]) for i in range(5)]
    return TestChipConfig(tuple(luts[:4]), luts[4])


def encode_macropixel(config: MacropixelConfig) -> BitChain:
    return BitChain(np.append(config.lut.to_bits(), np.uint8(int(config.mode))))


def decode_macropixel(chain: BitChain) -> MacropixelConfig:
    if len(chain) != MACROPIXEL_BITS:
        raise WrongLength(f"macropixel chain needs {MACROPIXEL_BITS} bits, got {len(chain)}")
    return MacropixelConfig(Lut16.from_bits(chain.bits[:LUT_BITS]), Mode(int(chain.bits[LUT_BITS])))


def encode_array(config: ArrayConfig) -> BitChain:
    luts = np.array([m.lut.bits for m in config.macropixels], dtype=np.int64)
    modes = np.array([int(m.mode) for m in config.macropixels], dtype=np.uint8)
    bits = np.empty((ARRAY_SIZE, MACROPIXEL_BITS), dtype=np.uint8)
    bits[:, :LUT_BITS] = (luts[:, None] >> np.arange(LUT_BITS)) & 1
    bits[:, LUT_BITS] = modes
    return BitChain(bits.ravel())


def decode_array(chain: BitChain) -> ArrayConfig:
    if len(chain) != ARRAY_BITS:
        raise WrongLength(f"array chain needs {ARRAY_BITS} bits, got {len(chain)}")
    bits = chain.bits.reshape(ARRAY_SIZE, MACROPIXEL_BITS).astype(np.int64)
    luts = (bits[:, :LUT_BITS] << np.arange(LUT_BITS)).sum(axis=1)
    return ArrayConfig(tuple(
        MacropixelConfig(Lut16(int(v)), Mode(int(m))) for v, m in zip(luts, bits[:, LUT_BITS])
    ))


def programming_time(bit_count: int, clock_hz: float) -> float:
    """Seconds needed to shift ``bit_count`` bits at one bit per clock cycle."""
    if not clock_hz > 0:
        raise InvalidClock(f"clock frequency must be positive, got {clock_hz!r}")
    return bit_count / clock_hz


def write_bitstream(path, chain: BitChain) -> None:
    Path(path).write_text(f"{BITSTREAM_MAGIC} {len(chain)}\n{chain.to_hex()}\n")


def read_bitstream(path) -> BitChain:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty bitstream file")
    header = lines[0].split()
    if len(header) != 2 or header[0] != BITSTREAM_MAGIC or not header[1].isdigit():
        raise ConfigError(f"{path}: expected header '{BITSTREAM_MAGIC} <bitcount>'")
    body = lines[1].strip() if len(lines) > 1 else ""
    return BitChain.from_hex(body, int(header[1]))
