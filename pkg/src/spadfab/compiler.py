"""Synthesis of LUT truth tables from combinator descriptions.

Supported combinators are OR / XOR / AND trees, k-of-n coincidence,
weighted-sum threshold neurons, constants, single-input passthrough and raw
16-bit tables. Each one restricts itself to an ``input_mask``: inputs
outside the mask never influence the generated table.

The module also parses the line-oriented spec text used by ``spadfab
compile``::

    # 16-SPAD OR tree
    leaf0 = or(0,1,2,3)
    leaf1 = neuron(w=[1,1,1,0], theta=2)
    leaf2 = raw(0xFEE8)
    leaf3 = pass(0)
    root  = coinc2(0,1,2,3)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .errors import InvalidSpec, SpecSyntaxError
from .fabric import LUT_BITS, LUT_INPUTS, Lut16, MacropixelConfig, Mode, TestChipConfig

FULL_MASK = 0xF
KINDS = ("or", "xor", "and", "coincidence", "neuron", "constant", "passthrough", "raw")


def _rational(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class CombinatorSpec:
    """Description of one LUT's Boolean function.

    Use the helper constructors (:func:`Or`, :func:`Coincidence`, ...) rather
    than filling fields by hand; :meth:`validate` enforces the invariants.
    """

    kind: str
    input_mask: int = FULL_MASK
    k: int = 0
    weights: tuple = ()
    threshold: Fraction = Fraction(0)
    value: int = 0
    index: int = 0

    @property
    def active_inputs(self) -> list:
        return [j for j in range(LUT_INPUTS) if self.input_mask >> j & 1]

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown combinator kind {self.kind!r}")
        if not 0 <= self.input_mask <= FULL_MASK:
            raise InvalidSpec(f"input mask {self.input_mask:#x} exceeds 4 inputs")
        n_active = len(self.active_inputs)
        if self.kind in ("or", "xor", "and") and n_active == 0:
            raise InvalidSpec(f"{self.kind} needs at least one active input")
        if self.kind == "coincidence" and not 1 <= self.k <= n_active:
            raise InvalidSpec(
                f"coincidence k={self.k} must lie in 1..{n_active} (active inputs)")
        if self.kind == "passthrough":
            if not 0 <= self.index < LUT_INPUTS:
                raise InvalidSpec(f"passthrough index {self.index} outside 0..3")
            if not self.input_mask >> self.index & 1:
                raise InvalidSpec(f"passthrough index {self.index} is not an active input")
        if self.kind == "neuron" and len(self.weights) != LUT_INPUTS:
            raise InvalidSpec(f"neuron needs {LUT_INPUTS} weights, got {len(self.weights)}")
        if self.kind == "constant" and self.value not in (0, 1):
            raise InvalidSpec(f"constant must be 0 or 1, got {self.value}")
        if self.kind == "raw":
            if not 0 <= self.value <= 0xFFFF:
                raise InvalidSpec(f"raw table {self.value:#x} does not fit in 16 bits")
            if self.input_mask != FULL_MASK:
                raise InvalidSpec("raw tables always use all four inputs")


def _mask(inputs) -> int:
    if inputs is None:
        return FULL_MASK
    mask = 0
    for i in inputs:
        if not 0 <= int(i) < LUT_INPUTS:
            raise InvalidSpec(f"input index {i} outside 0..3")
        mask |= 1 << int(i)
    return mask


def Or(inputs=None) -> CombinatorSpec:
    return CombinatorSpec("or", _mask(inputs))


def Xor(inputs=None) -> CombinatorSpec:
    return CombinatorSpec("xor", _mask(inputs))


def And(inputs=None) -> CombinatorSpec:
    return CombinatorSpec("and", _mask(inputs))


def Coincidence(k: int, inputs=None) -> CombinatorSpec:
    return CombinatorSpec("coincidence", _mask(inputs), k=int(k))


def Neuron(weights, threshold, inputs=None) -> CombinatorSpec:
    return CombinatorSpec("neuron", _mask(inputs),
                          weights=tuple(_rational(w) for w in weights),
                          threshold=_rational(threshold))


def Constant(bit: int) -> CombinatorSpec:
    return CombinatorSpec("constant", value=int(bit))


def Passthrough(index: int) -> CombinatorSpec:
    return CombinatorSpec("passthrough", index=int(index))


def Raw(value: int) -> CombinatorSpec:
    return CombinatorSpec("raw", value=int(value))


def _row_output(spec: CombinatorSpec, row: int) -> int:
    x = [(row >> j) & 1 if spec.input_mask >> j & 1 else 0 for j in range(LUT_INPUTS)]
    active = [x[j] for j in spec.active_inputs]
    kind = spec.kind
    if kind == "or":
        return int(any(active))
    if kind == "and":
        return int(all(active))
    if kind == "xor":
        return sum(active) & 1
    if kind == "coincidence":
        return int(sum(active) >= spec.k)
    if kind == "neuron":
        return int(sum(w * xi for w, xi in zip(spec.weights, x)) >= spec.threshold)
    if kind == "constant":
        return spec.value
    if kind == "passthrough":
        return x[spec.index]
    return (spec.value >> row) & 1  # raw


def compile_lut(spec: CombinatorSpec) -> Lut16:
    """Truth table of ``spec``, one row per combination of the 4 inputs."""
    spec.validate()
    bits = 0
    if spec.kind == "neuron":
        # scale to a common denominator so every row compares plain integers
        scale = math.lcm(spec.threshold.denominator, *(w.denominator for w in spec.weights))
        w = [int(v * scale) for v in spec.weights]
        theta = int(spec.threshold * scale)
        active = spec.active_inputs
        for row in range(LUT_BITS):
            if sum(w[j] for j in active if row >> j & 1) >= theta:
                bits |= 1 << row
        return Lut16(bits)
    for row in range(LUT_BITS):
        bits |= _row_output(spec, row) << row
    return Lut16(bits)


def compile_neuron(weights, threshold) -> Lut16:
    """Threshold neuron: row ``i`` fires iff ``sum_j w_j * x_j(i) >= threshold``.

    Weights and threshold may be any rationals (ints, Fractions, decimal
    strings); comparison is exact.
    """
    return compile_lut(Neuron(weights, threshold))


@dataclass(frozen=True)
class NetworkSpec:
    leaves: tuple
    root: CombinatorSpec

    def __post_init__(self):
        if len(self.leaves) != 4:
            raise InvalidSpec(f"network needs 4 leaves, got {len(self.leaves)}")
        object.__setattr__(self, "leaves", tuple(self.leaves))


def compile_network(spec: NetworkSpec) -> TestChipConfig:
    """Compile leaves and root; the root sees leaf outputs in index order."""
    return TestChipConfig(tuple(compile_lut(s) for s in spec.leaves), compile_lut(spec.root))


# --- spec text -------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#.*)
  | (?P<hex>0[xX][0-9a-fA-F]+)
  | (?P<num>-?\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<punct>[=(),\[\]])
""", re.VERBOSE)


class _Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


def _tokenize(line: str, lineno: int) -> list:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            bad = line[pos:].split()[0] if line[pos:].split() else line[pos]
            raise SpecSyntaxError("unexpected character", lineno, pos + 1, bad)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), lineno, pos + 1))
        pos = m.end()
    tokens.append(_Token("eol", "<end of line>", lineno, len(line) + 1))
    return tokens


class _LineParser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self, kind=None, text=None) -> _Token:
        tok = self.tokens[self.pos]
        if (kind is not None and tok.kind != kind) or (text is not None and tok.text != text):
            want = text if text is not None else {"eol": "end of line"}.get(kind, kind)
            raise SpecSyntaxError(f"expected {want}", tok.line, tok.column, tok.text)
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return SpecSyntaxError(message, tok.line, tok.column, tok.text)

    def number(self):
        tok = self.peek()
        if tok.kind == "hex":
            self.pos += 1
            return int(tok.text, 16), tok
        if tok.kind == "num":
            self.pos += 1
            return Fraction(tok.text), tok
        raise self.error("expected a number")

    def integer(self):
        value, tok = self.number()
        if isinstance(value, Fraction):
            if value.denominator != 1:
                raise self.error("expected an integer", tok)
            value = int(value)
        return value, tok

    def args(self):
        """Parse ``( item, ... )``; items are numbers, lists or ``key=value``.

        A bare name with no parentheses takes no arguments.
        """
        if self.peek().text != "(":
            return [], {}
        self.take("punct", "(")
        positional, named = [], {}
        if self.peek().text == ")":
            self.pos += 1
            return positional, named
        while True:
            tok = self.peek()
            if tok.kind == "name":
                self.pos += 1
                self.take("punct", "=")
                named[tok.text] = (self.value(), tok)
            else:
                positional.append((self.value(), tok))
            sep = self.peek()
            if sep.text == ",":
                self.pos += 1
                continue
            if sep.text == ")":
                self.pos += 1
                return positional, named
            raise self.error("expected ',' or ')'")

    def value(self):
        if self.peek().text == "[":
            self.pos += 1
            items = []
            while self.peek().text != "]":
                items.append(self.number()[0])
                if self.peek().text == ",":
                    self.pos += 1
                elif self.peek().text != "]":
                    raise self.error("expected ',' or ']'")
            self.pos += 1
            return items
        return self.number()[0]


_COMBINATOR_RE = re.compile(r"^(or|xor|and|coinc(\d+)|neuron|raw|const|pass|passthrough)$")


def _index_list(items, func_tok):
    out = []
    for value, tok in items:
        if not isinstance(value, (int, Fraction)) or Fraction(value).denominator != 1:
            raise SpecSyntaxError("input index must be an integer", tok.line, tok.column, tok.text)
        if not 0 <= int(value) < LUT_INPUTS:
            raise SpecSyntaxError("input index outside 0..3", tok.line, tok.column, tok.text)
        out.append(int(value))
    return out or None


def _build_combinator(p: _LineParser) -> CombinatorSpec:
    func = p.take("name")
    m = _COMBINATOR_RE.match(func.text.lower())
    if m is None:
        raise p.error("unknown combinator", func)
    name = m.group(1)
    positional, named = p.args()
    try:
        if name in ("or", "xor", "and"):
            ctor = {"or": Or, "xor": Xor, "and": And}[name]
            spec = ctor(_index_list(positional, func))
        elif name.startswith("coinc"):
            spec = Coincidence(int(m.group(2)), _index_list(positional, func))
        elif name == "neuron":
            if "w" not in named or "theta" not in named:
                raise p.error("neuron needs w=[...] and theta=...", func)
            weights, wtok = named["w"]
            if not isinstance(weights, list):
                raise SpecSyntaxError("w must be a list", wtok.line, wtok.column, wtok.text)
            spec = Neuron(weights, named["theta"][0])
        elif name == "raw":
            if len(positional) != 1:
                raise p.error("raw takes one 16-bit value", func)
            spec = Raw(int(positional[0][0]))
        elif name == "const":
            if len(positional) != 1:
                raise p.error("const takes one bit", func)
            spec = Constant(int(positional[0][0]))
        else:
            if len(positional) != 1:
                raise p.error("pass takes one input index", func)
            spec = Passthrough(_index_list(positional, func)[0])
        spec.validate()
    except InvalidSpec as exc:
        if isinstance(exc, SpecSyntaxError):
            raise
        raise SpecSyntaxError(str(exc), func.line, func.column, func.text) from None
    return spec


_TARGETS = {"leaf0", "leaf1", "leaf2", "leaf3", "root", "lut", "mode"}


def parse_spec_text(text: str) -> dict:
    """Parse spec text into ``{target: CombinatorSpec or Mode}``.

    Targets are ``leaf0..leaf3`` and ``root`` for the test chip, or ``lut``
    (plus optional ``mode = pc | tof``) for a single macropixel.
    """
    result = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        p = _LineParser(_tokenize(line, lineno))
        if p.peek().kind == "eol":
            continue
        target = p.take("name")
        if target.text not in _TARGETS:
            raise p.error("unknown target (expected leaf0..leaf3, root, lut or mode)", target)
        if target.text in result:
            raise p.error("duplicate target", target)
        p.take("punct", "=")
        if target.text == "mode":
            tok = p.take("name")
            modes = {"pc": Mode.PHOTON_COUNTING, "tof": Mode.TOF}
            if tok.text.lower() not in modes:
                raise p.error("mode must be pc or tof", tok)
            result["mode"] = modes[tok.text.lower()]
        else:
            result[target.text] = _build_combinator(p)
        p.take("eol")
    return result


def compile_spec_text(text: str):
    """Compile spec text into a :class:`TestChipConfig` or :class:`MacropixelConfig`."""
    parsed = parse_spec_text(text)
    network_keys = {"leaf0", "leaf1", "leaf2", "leaf3", "root"}
    if "lut" in parsed:
        extra = sorted(network_keys & parsed.keys())
        if extra:
            raise SpecSyntaxError("cannot mix lut with network targets", 1, 1, extra[0])
        return MacropixelConfig(compile_lut(parsed["lut"]), parsed.get("mode", Mode.PHOTON_COUNTING))
    missing = sorted(network_keys - parsed.keys())
    if missing:
        raise SpecSyntaxError("missing target", 1, 1, missing[0])
    if "mode" in parsed:
        raise SpecSyntaxError("mode applies only to a single-macropixel lut", 1, 1, "mode")
    return compile_network(NetworkSpec(tuple(parsed[f"leaf{j}"] for j in range(4)), parsed["root"]))


def parse_combinator(text: str) -> CombinatorSpec:
    """Parse one combinator expression such as ``coinc2(0,1,2,3)``.

    A bare name (``or``) means all four inputs; a bare hex value is a raw table.
    """
    text = text.strip()
    if re.fullmatch(r"0[xX][0-9a-fA-F]+", text):
        text = f"raw({text})"
    elif "(" not in text:
        text = f"{text}()"
    p = _LineParser(_tokenize(text, 1))
    spec = _build_combinator(p)
    p.take("eol")
    return spec


def describe(spec: CombinatorSpec) -> str:
    """Short label used in reports (``or``, ``coinc2``, ``neuron``...)."""
    if spec.kind == "coincidence":
        return f"coinc{spec.k}"
    return {"passthrough": f"pass{spec.index}", "constant": f"const{spec.value}",
            "raw": f"raw_{spec.value:04X}"}.get(spec.kind, spec.kind)
