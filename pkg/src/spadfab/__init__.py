"""Event-driven simulator and configuration compiler for LUT-combined SPAD arrays."""

from .errors import (ConfigError, EmptyHistogram, InvalidClock, InvalidSpec, MalformedStream,
                     OutOfBounds, OutOfRange, SimulationError, SpadfabError, SpecSyntaxError,
                     WrongLength)
from .fabric import (ARRAY_BITS, ArrayConfig, BitChain, Lut16, MacropixelConfig, Mode,
                     TestChipConfig, decode_array, decode_macropixel, decode_test_chip,
                     encode_array, encode_macropixel, encode_test_chip, eval_lut,
                     programming_time, read_bitstream, write_bitstream)
from .compiler import (And, Coincidence, CombinatorSpec, Constant, NetworkSpec, Neuron, Or,
                       Passthrough, Raw, Xor, compile_lut, compile_network, compile_neuron,
                       compile_spec_text, parse_spec_text)
from .frontend import (BiasCurve, EdgeStream, Laser, Scene, SpadParams, generate_arrivals,
                       lookup_bias, shape_pulses, spad_streams)
from .engine import count_rising_edges, oracle_discretized, simulate_lut, simulate_network
from .readout import (TdcCode, TdcParams, TofHistogram, acquire_tof, count_mode, histogram_sbr,
                      tdc_convert)
from .arraysim import (FrameOutput, ModeMap, PixelMode, PowerParams, configure_roi,
                       estimate_power, run_array_frame)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EmptyHistogram",
    "InvalidClock",
    "InvalidSpec",
    "MalformedStream",
    "OutOfBounds",
    "OutOfRange",
    "SimulationError",
    "SpadfabError",
    "SpecSyntaxError",
    "WrongLength",
    "ARRAY_BITS",
    "ArrayConfig",
    "BitChain",
    "Lut16",
    "MacropixelConfig",
    "Mode",
    "TestChipConfig",
    "decode_array",
    "decode_macropixel",
    "decode_test_chip",
    "encode_array",
    "encode_macropixel",
    "encode_test_chip",
    "eval_lut",
    "programming_time",
    "read_bitstream",
    "write_bitstream",
    "And",
    "Coincidence",
    "CombinatorSpec",
    "Constant",
    "NetworkSpec",
    "Neuron",
    "Or",
    "Passthrough",
    "Raw",
    "Xor",
    "compile_lut",
    "compile_network",
    "compile_neuron",
    "compile_spec_text",
    "parse_spec_text",
    "BiasCurve",
    "EdgeStream",
    "Laser",
    "Scene",
    "SpadParams",
    "generate_arrivals",
    "lookup_bias",
    "shape_pulses",
    "spad_streams",
    "count_rising_edges",
    "oracle_discretized",
    "simulate_lut",
    "simulate_network",
    "TdcCode",
    "TdcParams",
    "TofHistogram",
    "acquire_tof",
    "count_mode",
    "histogram_sbr",
    "tdc_convert",
    "FrameOutput",
    "ModeMap",
    "PixelMode",
    "PowerParams",
    "configure_roi",
    "estimate_power",
    "run_array_frame",
]
