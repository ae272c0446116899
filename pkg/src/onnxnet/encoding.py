"""Chain-per-line text serialization of a prepared graph.

Line format, one chain each::

    Operation(Input1, ...)(key=value,...) --> Operation(prev, ...) --> Label:Shape

Four components toggle independently: the base operation/label skeleton is
always present, input clauses, parameter clauses and output shapes are
optional. ``validate_encoding`` checks emitted text against the grammar.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import onnx_file as of
from .chains import Chain, NamingTable, build_chains
from .graph import GraphIR, NodeSpec, parse_onnx
from .passes import simplify
from .shape_inference import infer_shapes


@dataclass(frozen=True)
class EncodingConfig:
    include_inputs: bool = True
    include_parameters: bool = True
    include_out_shape: bool = True

    @classmethod
    def base(cls) -> "EncodingConfig":
        return cls(False, False, False)

    @classmethod
    def full(cls) -> "EncodingConfig":
        return cls(True, True, True)


VARIANTS: dict[str, EncodingConfig] = {
    "base": EncodingConfig(False, False, False),
    "inputs": EncodingConfig(True, False, False),
    "parameters": EncodingConfig(False, True, False),
    "outshape": EncodingConfig(False, False, True),
    "full": EncodingConfig(True, True, True),
}


@dataclass(frozen=True)
class EncodedArch:
    text: str
    line_count: int
    token_estimate: int


@dataclass(frozen=True)
class Violation:
    line_no: int
    reason: str


def _float_repr(value: float) -> str:
    # shortest string that round-trips at attribute (f32) precision
    return str(np.float32(value))


def _attr_repr(value) -> str | None:
    """Printable form of an attribute value; None means omit the pair."""
    if isinstance(value, of.PbTensor):
        return None
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return _float_repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value if value else None
    items = list(value)
    if not items:
        return None
    if all(isinstance(v, int) for v in items) and len(set(items)) == 1:
        return str(items[0])
    rendered = [_float_repr(v) if isinstance(v, float) else str(v) for v in items]
    return "[" + ",".join(rendered) + "]"


def _param_clause(node: NodeSpec) -> str:
    pairs = []
    for key in sorted(node.attrs):
        rv = _attr_repr(node.attrs[key])
        if rv is not None:
            pairs.append(f"{key}={rv}")
    return f"({','.join(pairs)})" if pairs else ""


def _clause(
    node: NodeSpec,
    prev_value: str | None,
    naming: NamingTable,
    cfg: EncodingConfig,
) -> str:
    text = node.op_type
    if cfg.include_inputs:
        args = []
        for name in node.inputs:
            if not name:
                continue
            args.append("prev" if name == prev_value else naming.labels[name])
        if args:
            text += "(" + ", ".join(args) + ")"
    if cfg.include_parameters:
        text += _param_clause(node)
    return text


def _outputs_part(
    g: GraphIR, chain: Chain, naming: NamingTable, cfg: EncodingConfig
) -> str:
    pieces = []
    for name in chain.tail_outputs:
        refs = [naming.labels[name]]
        out_label = naming.out_labels.get(name)
        if out_label is not None and out_label != refs[0]:
            refs.append(out_label)
        for ref in refs:
            if cfg.include_out_shape:
                shape = g.values[name].shape
                ref = f"{ref}:{'?' if shape is None else shape.render()}"
            pieces.append(ref)
    return ", ".join(pieces)


def encode(g: GraphIR, cfg: EncodingConfig = EncodingConfig()) -> EncodedArch:
    """Serialize a simplified, shape-inferred graph; one line per chain.

    Deterministic: identical graphs and configs produce identical bytes.
    """
    chains, naming = build_chains(g)
    lines = []
    for chain in chains:
        clauses = []
        prev: str | None = None
        for nid in chain.nodes:
            node = g.nodes[nid]
            clauses.append(_clause(node, prev, naming, cfg))
            prev = node.outputs[0] if node.outputs else None
        clauses.append(_outputs_part(g, chain, naming, cfg))
        lines.append(" --> ".join(clauses))
    text = "\n".join(lines) + ("\n" if lines else "")
    return EncodedArch(
        text=text,
        line_count=len(lines),
        token_estimate=len(text.split()),
    )


# ---------------------------------------------------------------------------
# grammar validation

_OPNAME = r"[A-Za-z_][A-Za-z0-9_]*"
_SHAPE = r"(?:scalar|(?:\d+|\?)(?:x(?:\d+|\?))*)"
_VALREF = r"Value[1-9][0-9]*"
_OUTREF = rf"(?:{_VALREF}|Out(?:[0-9]+)?)"
_ARG = rf"(?:prev|{_VALREF}|{_SHAPE})"
_NUM = r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?"
_TOKEN = r"[A-Za-z_][A-Za-z0-9_.]*"
_ITEM = rf"(?:{_NUM}|{_TOKEN})"
_KV = rf"{_TOKEN}=(?:{_ITEM}|\[{_ITEM}(?:,{_ITEM})*\])"

_CLAUSE_RE = re.compile(
    rf"^({_OPNAME})(?:\(([^()]*)\))?(?:\(([^()]*)\))?$"
)
_INPUTS_RE = re.compile(rf"^{_ARG}(?:, {_ARG})*$")
_PARAMS_RE = re.compile(rf"^{_KV}(?:,{_KV})*$")
_OUTPUT_RE = re.compile(rf"^{_OUTREF}(?::{_SHAPE})?$")


def _check_inputs_group(group: str) -> str | None:
    if not _INPUTS_RE.match(group):
        return f"bad input arguments {group!r}"
    return None


def _check_params_group(group: str) -> str | None:
    if not _PARAMS_RE.match(group):
        return f"bad parameter assignments {group!r}"
    return None


def _check_clause(clause: str) -> str | None:
    m = _CLAUSE_RE.match(clause)
    if not m:
        return f"malformed clause {clause!r}"
    first, second = m.group(2), m.group(3)
    if second is not None:
        if first is None:
            return f"malformed clause {clause!r}"
        return _check_inputs_group(first) or _check_params_group(second)
    if first is not None:
        if "=" in first:
            return _check_params_group(first)
        return _check_inputs_group(first)
    return None


def validate_encoding(text: str) -> list[Violation]:
    """Check every line against the encoding grammar; empty list = valid."""
    violations: list[Violation] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line:
            violations.append(Violation(line_no, "empty line"))
            continue
        if line != line.rstrip():
            violations.append(Violation(line_no, "trailing whitespace"))
            continue
        segments = line.split(" --> ")
        if len(segments) < 2:
            violations.append(Violation(line_no, "missing ' --> ' separator"))
            continue
        ok = True
        for segment in segments[:-1]:
            reason = _check_clause(segment)
            if reason is not None:
                violations.append(Violation(line_no, reason))
                ok = False
                break
        if not ok:
            continue
        for out in segments[-1].split(", "):
            if not _OUTPUT_RE.match(out):
                violations.append(Violation(line_no, f"bad output {out!r}"))
                break
    return violations


# ---------------------------------------------------------------------------
# file pipeline


def prepare_graph(g: GraphIR) -> GraphIR:
    """Simplify to fixpoint and infer shapes: ready for encoding."""
    simplified, _ = simplify(g)
    return infer_shapes(simplified)


def encode_bytes(data: bytes, cfg: EncodingConfig = EncodingConfig()) -> EncodedArch:
    return encode(prepare_graph(parse_onnx(data)), cfg)


def encode_file(path, cfg: EncodingConfig = EncodingConfig()) -> EncodedArch:
    """parse -> simplify -> infer shapes -> condense -> encode, end to end."""
    with open(path, "rb") as fh:
        data = fh.read()
    return encode_bytes(data, cfg)


class TextEncoder(TransformerMixin, BaseEstimator):
    """Transformer from ONNX models to their condensed text encodings.

    Accepts file paths or raw model bytes and emits one string per input.
    Stateless: ``fit`` only validates parameters.

    Parameters
    ----------
    variant : str, default="full"
        One of ``base``, ``inputs``, ``parameters``, ``outshape``, ``full``.
    """

    def __init__(self, variant: str = "full"):
        self.variant = variant

    def _config(self) -> EncodingConfig:
        try:
            return VARIANTS[self.variant]
        except KeyError:
            raise ValueError(
                f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}"
            ) from None

    def fit(self, X=None, y=None):
        self._config()
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> list[str]:
        cfg = self._config()
        out = []
        for item in X:
            if isinstance(item, (bytes, bytearray, memoryview)):
                out.append(encode_bytes(bytes(item), cfg).text)
            elif isinstance(item, (str, os.PathLike)):
                out.append(encode_file(item, cfg).text)
            else:
                raise TypeError(
                    f"expected a path or ONNX bytes, got {type(item).__name__}"
                )
        return out
