"""Command-line front end: ``spadfab <command> [options]``.

Exit status is 0 on success, 2 for configuration or parse errors and 3 for
failures during simulation.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import sys
from pathlib import Path

from . import __version__
from .arraysim import (ModeMap, PixelMode, PowerParams, apply_mode_map, estimate_power, read_mode_map,
                       run_array_frame, write_frame, write_mode_map)
from .compiler import compile_lut, compile_spec_text
from .config import ArraySetup, load_experiment, power_params_from
from .errors import ConfigError, SpadfabError
from .experiments import LinearitySetup, TofSetup, run_tof, sweep_linearity
from .fabric import (ARRAY_BITS, MACROPIXEL_BITS, TEST_CHIP_BITS, ArrayConfig, MacropixelConfig,
                     Mode, TestChipConfig, encode_array, encode_macropixel, encode_test_chip,
                     programming_time, write_bitstream)
from .readout import histogram_summary, write_histogram_csv

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_TARGET_BITS = {"test-chip": TEST_CHIP_BITS, "macropixel": MACROPIXEL_BITS, "array": ARRAY_BITS}


def format_seconds(t: float) -> str:
    """``8e-07`` -> ``'800 ns'``; picks the largest unit giving a value >= 1."""
    for scale, unit in ((1.0, "s"), (1e-3, "ms"), (1e-6, "us"), (1e-9, "ns"), (1e-12, "ps")):
        if t >= scale or unit == "ps":
            return f"{round(t / scale, 9):.6g} {unit}"
    raise AssertionError("unreachable")


def _format_hz(f: float) -> str:
    for scale, unit in ((1e9, "GHz"), (1e6, "MHz"), (1e3, "kHz")):
        if f >= scale:
            return f"{f / scale:.6g} {unit}"
    return f"{f:.6g} Hz"


class _Run:
    """Per-invocation context: output directory, header policy, parallelism."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.stamp = None if args.no_timestamp else _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def header(self, title: str, **meta) -> str:
        lines = [f"# spadfab {__version__} {title}"]
        if meta:
            lines.append("# " + " ".join(f"{k}={v}" for k, v in meta.items()))
        if self.stamp:
            lines.append(f"# generated={self.stamp}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return f"{v:.10g}"
    return str(v)


def _write_csv(path: Path, header: str, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


# --- commands --------------------------------------------------------------

def cmd_compile(args, run: _Run) -> int:
    try:
        text = Path(args.spec).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.spec}: {exc.strerror}") from None
    config = compile_spec_text(text)
    clock = args.clock if args.clock is not None else 100e6
    if isinstance(config, TestChipConfig):
        chain = encode_test_chip(config)
        names = [f"leaf{j}" for j in range(4)] + ["root"]
        luts = list(config.luts)
    else:
        chain = encode_macropixel(config)
        names, luts = ["lut"], [config.lut]
    out = Path(args.output) if args.output else run.path(Path(args.spec).stem + ".bit")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_bitstream(out, chain)
    for name, lut in zip(names, luts):
        print(f"{name:<6} {lut}")
    if isinstance(config, MacropixelConfig):
        print(f"mode   {'tof' if config.mode == Mode.TOF else 'pc'}")
    t = programming_time(len(chain), clock)
    print(f"bits   {len(chain)}")
    print(f"programming time {format_seconds(t)} @ {_format_hz(clock)}")
    print(f"bitstream written to {out}")
    return 0


def cmd_program_time(args, run: _Run) -> int:
    bits = args.bits if args.bits is not None else _TARGET_BITS[args.target]
    default_clock = 100e6 if args.target == "test-chip" and args.bits is None else 10e6
    clock = args.clock if args.clock is not None else default_clock
    t = programming_time(bits, clock)
    print(f"{bits} bits @ {_format_hz(clock)} -> {format_seconds(t)} ({t!r} s)")
    return 0


def cmd_sweep_linearity(args, run: _Run) -> int:
    exp = load_experiment(args.config, "sweep-linearity", args.paper_scale)
    setup: LinearitySetup = exp.setup
    rows = sweep_linearity(setup, base_seed=args.seed, jobs=args.jobs)
    header = run.header("sweep-linearity", integration_s=_fmt(setup.integration_s), seeds=setup.seeds,
                        base_seed=args.seed, paper_scale=int(args.paper_scale))
    cols = ["combo", "setting", "n_spads", "flux_hz", "mean_count", "std_count", "expected_count",
            "pde", "dead_time_ps"]
    _write_csv(run.path("linearity.csv"), header, cols,
               [(r.combo, r.setting, r.n_spads, r.flux_hz, r.mean_count, r.std_count, r.expected_count,
                 r.pde, r.dead_time_ps) for r in rows])
    if args.plot:
        from .plotting import plot_linearity
        plot_linearity(rows, run.path("linearity.png"))
    print(f"{len(rows)} sweep points written to {run.path('linearity.csv')}")
    return 0


def cmd_tof(args, run: _Run) -> int:
    exp = load_experiment(args.config, "tof", args.paper_scale)
    setup: TofSetup = exp.setup
    result = run_tof(setup, seed=args.seed)
    rows = []
    for label in result.labels:
        h = result.histograms[label]
        write_histogram_csv(run.path(f"tof_{label}.csv"), h)
        run.path(f"tof_{label}.json").write_text(histogram_summary(h, result.signal_window))
        rows.append((label, result.sbr[label], result.sbr_sigma[label], h.total, h.frames, h.peak_code))
    lo, hi = result.signal_window
    header = run.header("tof", frames=setup.frames, seed=args.seed, signal_codes=f"{lo}-{hi}",
                        background_flux_hz=_fmt(setup.scene.background_flux_hz))
    _write_csv(run.path("tof_sbr.csv"), header,
               ["lut", "sbr", "sbr_sigma", "total_hits", "frames", "peak_code"], rows)
    if args.plot:
        from .plotting import plot_tof
        plot_tof(result, setup.tdc, run.path("tof.png"))
    for label, sbr, sigma, total, *_ in rows:
        print(f"{label:<8} SBR {_fmt(sbr):>12} +- {_fmt(sigma):<10} hits {total}")
    return 0


def _power_report(modes: ModeMap, params, run: _Run) -> str:
    counts = modes.counts()
    total = estimate_power(modes, params)
    all_tof = estimate_power(ModeMap.uniform(PixelMode.TOF), params)
    lines = [
        run.header("power").rstrip("\n"),
        f"macropixels_tof {counts[PixelMode.TOF]}",
        f"macropixels_pc {counts[PixelMode.PHOTON_COUNTING]}",
        f"macropixels_off {counts[PixelMode.OFF]}",
        f"power_w {_fmt(total)}",
        f"power_all_tof_w {_fmt(all_tof)}",
        f"reduction_vs_all_tof_w {_fmt(all_tof - total)}",
    ]
    return "\n".join(lines) + "\n"


def cmd_power(args, run: _Run) -> int:
    modes = read_mode_map(args.mode_map)
    params = power_params_from(args.config) if args.config else PowerParams()
    report = _power_report(modes, params, run)
    sys.stdout.write(report)
    return 0


def cmd_array(args, run: _Run) -> int:
    exp = load_experiment(args.config, "array", args.paper_scale)
    setup: ArraySetup = exp.setup
    modes = read_mode_map(args.mode_map) if args.mode_map else setup.modes
    pc_lut, tof_lut = compile_lut(setup.pc_lut), compile_lut(setup.tof_lut)
    base = ArrayConfig(tuple(
        MacropixelConfig(tof_lut if modes.grid.flat[i] == PixelMode.TOF else pc_lut,
                         Mode.TOF if modes.grid.flat[i] == PixelMode.TOF else Mode.PHOTON_COUNTING)
        for i in range(modes.grid.size)))
    config = apply_mode_map(base, modes)
    frame = run_array_frame(setup.scene, config, modes, args.seed, setup.spad, setup.tdc, jobs=args.jobs)
    write_frame(run.out, frame)
    write_mode_map(run.path("mode_map.txt"), modes)
    write_bitstream(run.path("array.bit"), encode_array(config))
    clock = args.clock if args.clock is not None else setup.clock_hz
    report = _power_report(modes, setup.power, run)
    report += f"chain_bits {ARRAY_BITS}\nprogramming_time {format_seconds(programming_time(ARRAY_BITS, clock))} @ {_format_hz(clock)}\n"
    run.path("power.txt").write_text(report)
    if args.plot:
        from .plotting import plot_array
        plot_array(frame, setup.tdc.lsb_ps, run.path("array.png"))
    sys.stdout.write(report)
    return 0


# --- parser ----------------------------------------------------------------

def _common(suppress: bool) -> argparse.ArgumentParser:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(0), help="base random seed (default 0)")
    g.add_argument("--out", default=d("out"), metavar="DIR", help="output directory (default ./out)")
    g.add_argument("--paper-scale", action="store_true", default=d(False),
                   help="use full-length protocols (1 s integration, 100 repeats)")
    g.add_argument("--clock", type=float, default=d(None), metavar="HZ", help="shift-register clock")
    g.add_argument("--no-timestamp", action="store_true", default=d(False),
                   help="omit the generation timestamp from output headers")
    g.add_argument("--jobs", type=int, default=d(1), help="worker processes (results are identical)")
    g.add_argument("--no-plot", dest="plot", action="store_false", default=d(True),
                   help="skip PNG figures")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spadfab", parents=[_common(False)],
                                     description="LUT-based SPAD fabric simulator and compiler")
    parser.add_argument("--version", action="version", version=f"spadfab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(True)

    p = sub.add_parser("compile", parents=[common], help="compile a LUT spec to a bitstream")
    p.add_argument("spec", help="spec text file")
    p.add_argument("-o", "--output", help="bitstream path (default OUT/<spec>.bit)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sweep-linearity", parents=[common], help="XOR/OR count linearity sweep")
    p.add_argument("config", nargs="?", help="YAML experiment config (defaults built in)")
    p.set_defaults(func=cmd_sweep_linearity)

    p = sub.add_parser("tof", parents=[common], help="coincidence ToF histograms and SBR")
    p.add_argument("config", nargs="?", help="YAML experiment config (defaults built in)")
    p.set_defaults(func=cmd_tof)

    p = sub.add_parser("array", parents=[common], help="simulate one 32x32 array frame")
    p.add_argument("config", nargs="?", help="YAML experiment config (defaults built in)")
    p.add_argument("--mode-map", help="32x32 mode map text file (overrides config)")
    p.set_defaults(func=cmd_array)

    p = sub.add_parser("power", parents=[common], help="power estimate for a mode map")
    p.add_argument("mode_map", help="32x32 mode map text file")
    p.add_argument("--config", help="YAML file with a power section")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("program-time", parents=[common], help="shift-register programming time")
    p.add_argument("--target", choices=sorted(_TARGET_BITS), default="test-chip")
    p.add_argument("--bits", type=int, help="explicit chain length")
    p.set_defaults(func=cmd_program_time)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args, _Run(args))
    except (ConfigError, OSError) as exc:
        print(f"spadfab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpadfabError as exc:
        print(f"spadfab: simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
