"""Decode and encode the ONNX ModelProto subset this toolchain consumes.

The reader accepts any ModelProto wire stream, skipping unknown fields, and
surfaces just the pieces the graph layer needs: nodes, attributes,
initializers and typed value infos. The writer emits a deterministic,
well-formed ModelProto (fields in ascending order, packed repeated scalars)
that external protobuf decoders accept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _protowire as wire
from .exceptions import MalformedFile

# TensorProto.DataType values we can materialize as numpy arrays.
FLOAT = 1
UINT8 = 2
INT8 = 3
UINT16 = 4
INT16 = 5
INT32 = 6
INT64 = 7
BOOL = 9
FLOAT16 = 10
DOUBLE = 11
UINT32 = 12
UINT64 = 13

NUMPY_DTYPES = {
    FLOAT: np.dtype("<f4"),
    UINT8: np.dtype("<u1"),
    INT8: np.dtype("<i1"),
    UINT16: np.dtype("<u2"),
    INT16: np.dtype("<i2"),
    INT32: np.dtype("<i4"),
    INT64: np.dtype("<i8"),
    BOOL: np.dtype("<u1"),
    FLOAT16: np.dtype("<f2"),
    DOUBLE: np.dtype("<f8"),
    UINT32: np.dtype("<u4"),
    UINT64: np.dtype("<u8"),
}

DTYPE_CODES = {
    np.dtype("float32"): FLOAT,
    np.dtype("uint8"): UINT8,
    np.dtype("int8"): INT8,
    np.dtype("uint16"): UINT16,
    np.dtype("int16"): INT16,
    np.dtype("int32"): INT32,
    np.dtype("int64"): INT64,
    np.dtype("float16"): FLOAT16,
    np.dtype("float64"): DOUBLE,
    np.dtype("uint32"): UINT32,
    np.dtype("uint64"): UINT64,
}

# AttributeProto.AttributeType
ATTR_FLOAT = 1
ATTR_INT = 2
ATTR_STRING = 3
ATTR_TENSOR = 4
ATTR_GRAPH = 5
ATTR_FLOATS = 6
ATTR_INTS = 7
ATTR_STRINGS = 8
ATTR_TENSORS = 9
ATTR_GRAPHS = 10


@dataclass
class PbTensor:
    name: str = ""
    data_type: int = 0
    dims: tuple[int, ...] = ()
    raw: bytes | None = None

    def to_numpy(self) -> np.ndarray | None:
        dtype = NUMPY_DTYPES.get(self.data_type)
        if dtype is None or self.raw is None:
            return None
        count = 1
        for d in self.dims:
            count *= d
        if len(self.raw) != count * dtype.itemsize:
            if not self.raw:
                return None  # shape-only tensor (e.g. external data)
            raise MalformedFile(
                f"tensor '{self.name}': payload is {len(self.raw)} bytes, "
                f"expected {count * dtype.itemsize}"
            )
        arr = np.frombuffer(self.raw, dtype=dtype).reshape(self.dims)
        if self.data_type == BOOL:
            arr = arr.astype(bool)
        return arr

    @classmethod
    def from_numpy(cls, name: str, arr: np.ndarray) -> "PbTensor":
        arr = np.asarray(arr)
        shape = tuple(arr.shape)  # ascontiguousarray would promote 0-d to 1-d
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.dtype(bool):
            code = BOOL
            payload = arr.astype("<u1").tobytes()
        else:
            code = DTYPE_CODES.get(arr.dtype)
            if code is None:
                raise MalformedFile(f"unsupported array dtype {arr.dtype}")
            payload = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        return cls(name=name, data_type=code, dims=shape, raw=payload)


@dataclass
class PbValueInfo:
    name: str = ""
    elem_type: int | None = None
    # None: the file carries no shape. Entries are ints or None (symbolic).
    dims: tuple[int | None, ...] | None = None


@dataclass
class PbAttribute:
    name: str = ""
    type: int = 0
    f: float = 0.0
    i: int = 0
    s: bytes = b""
    t: PbTensor | None = None
    floats: list[float] = field(default_factory=list)
    ints: list[int] = field(default_factory=list)
    strings: list[bytes] = field(default_factory=list)
    has_graph: bool = False


@dataclass
class PbNode:
    op_type: str = ""
    name: str = ""
    domain: str = ""
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    attributes: list[PbAttribute] = field(default_factory=list)


@dataclass
class PbGraph:
    name: str = ""
    nodes: list[PbNode] = field(default_factory=list)
    initializers: list[PbTensor] = field(default_factory=list)
    inputs: list[PbValueInfo] = field(default_factory=list)
    outputs: list[PbValueInfo] = field(default_factory=list)
    value_infos: list[PbValueInfo] = field(default_factory=list)


@dataclass
class PbModel:
    ir_version: int = 8
    producer_name: str = ""
    opset_imports: list[tuple[str, int]] = field(default_factory=list)
    graph: PbGraph | None = None


# ---------------------------------------------------------------------------
# decoding


def _decode_tensor(data: bytes) -> PbTensor:
    r = wire.Reader(data)
    t = PbTensor()
    dims: list[int] = []
    floats: list[float] = []
    ints64: list[int] = []
    ints32: list[int] = []
    doubles: list[float] = []
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1:
            if w == wire.WIRE_LEN:
                dims.extend(wire.read_packed_varints(r.delimited()))
            else:
                dims.append(r.signed_varint())
        elif fnum == 2 and w == wire.WIRE_VARINT:
            t.data_type = r.varint()
        elif fnum == 4:
            if w == wire.WIRE_LEN:
                floats.extend(wire.read_packed_floats(r.delimited()))
            else:
                floats.append(r.float32())
        elif fnum == 5:
            if w == wire.WIRE_LEN:
                ints32.extend(wire.read_packed_varints(r.delimited()))
            else:
                ints32.append(r.signed_varint())
        elif fnum == 7:
            if w == wire.WIRE_LEN:
                ints64.extend(wire.read_packed_varints(r.delimited()))
            else:
                ints64.append(r.signed_varint())
        elif fnum == 8 and w == wire.WIRE_LEN:
            t.name = r.delimited().decode("utf-8")
        elif fnum == 9 and w == wire.WIRE_LEN:
            t.raw = r.delimited()
        elif fnum == 10:
            if w == wire.WIRE_LEN:
                blob = r.delimited()
                doubles.extend(
                    np.frombuffer(blob, dtype="<f8").tolist()
                    if len(blob) % 8 == 0
                    else ()
                )
            else:
                doubles.append(np.frombuffer(r.fixed64(), dtype="<f8")[0])
        else:
            r.skip(w)
    t.dims = tuple(dims)
    if t.raw is None:
        # Normalize typed repeated fields into a raw little-endian payload.
        if floats and t.data_type == FLOAT:
            t.raw = np.asarray(floats, dtype="<f4").tobytes()
        elif doubles and t.data_type == DOUBLE:
            t.raw = np.asarray(doubles, dtype="<f8").tobytes()
        elif ints64 and t.data_type in (INT64, UINT64):
            t.raw = np.asarray(ints64, dtype=NUMPY_DTYPES[t.data_type]).tobytes()
        elif ints32 and t.data_type in NUMPY_DTYPES:
            dtype = NUMPY_DTYPES[t.data_type]
            t.raw = (np.asarray(ints32, dtype="<i8") & ((1 << (8 * dtype.itemsize)) - 1)).astype(
                dtype
            ).tobytes() if dtype.kind == "u" else np.asarray(ints32, dtype=dtype).tobytes()
        elif not any((floats, doubles, ints64, ints32)):
            total = 1
            for d in t.dims:
                total *= d
            if total == 0:
                t.raw = b""
    return t


def _decode_dims(data: bytes) -> tuple[int | None, ...]:
    r = wire.Reader(data)
    dims: list[int | None] = []
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1 and w == wire.WIRE_LEN:
            dr = wire.Reader(r.delimited())
            value: int | None = None
            while not dr.at_end():
                dfnum, dw = dr.tag()
                if dfnum == 1 and dw == wire.WIRE_VARINT:
                    value = dr.signed_varint()
                else:
                    dr.skip(dw)
            dims.append(value if value is not None and value >= 0 else None)
        else:
            r.skip(w)
    return tuple(dims)


def _decode_value_info(data: bytes) -> PbValueInfo:
    r = wire.Reader(data)
    vi = PbValueInfo()
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1 and w == wire.WIRE_LEN:
            vi.name = r.delimited().decode("utf-8")
        elif fnum == 2 and w == wire.WIRE_LEN:
            tr = wire.Reader(r.delimited())
            while not tr.at_end():
                tfnum, tw = tr.tag()
                if tfnum == 1 and tw == wire.WIRE_LEN:  # tensor_type
                    tt = wire.Reader(tr.delimited())
                    while not tt.at_end():
                        ttf, ttw = tt.tag()
                        if ttf == 1 and ttw == wire.WIRE_VARINT:
                            vi.elem_type = tt.varint()
                        elif ttf == 2 and ttw == wire.WIRE_LEN:
                            vi.dims = _decode_dims(tt.delimited())
                        else:
                            tt.skip(ttw)
                else:
                    tr.skip(tw)
        else:
            r.skip(w)
    return vi


def _decode_attribute(data: bytes) -> PbAttribute:
    r = wire.Reader(data)
    a = PbAttribute()
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1 and w == wire.WIRE_LEN:
            a.name = r.delimited().decode("utf-8")
        elif fnum == 2 and w == wire.WIRE_I32:
            a.f = r.float32()
        elif fnum == 3 and w == wire.WIRE_VARINT:
            a.i = r.signed_varint()
        elif fnum == 4 and w == wire.WIRE_LEN:
            a.s = r.delimited()
        elif fnum == 5 and w == wire.WIRE_LEN:
            a.t = _decode_tensor(r.delimited())
        elif fnum in (6, 11) and w == wire.WIRE_LEN:
            a.has_graph = True
            r.delimited()
        elif fnum == 7:
            if w == wire.WIRE_LEN:
                a.floats.extend(wire.read_packed_floats(r.delimited()))
            else:
                a.floats.append(r.float32())
        elif fnum == 8:
            if w == wire.WIRE_LEN:
                a.ints.extend(wire.read_packed_varints(r.delimited()))
            else:
                a.ints.append(r.signed_varint())
        elif fnum == 9 and w == wire.WIRE_LEN:
            a.strings.append(r.delimited())
        elif fnum == 20 and w == wire.WIRE_VARINT:
            a.type = r.varint()
        else:
            r.skip(w)
    return a


def _decode_node(data: bytes) -> PbNode:
    r = wire.Reader(data)
    n = PbNode()
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1 and w == wire.WIRE_LEN:
            n.inputs.append(r.delimited().decode("utf-8"))
        elif fnum == 2 and w == wire.WIRE_LEN:
            n.outputs.append(r.delimited().decode("utf-8"))
        elif fnum == 3 and w == wire.WIRE_LEN:
            n.name = r.delimited().decode("utf-8")
        elif fnum == 4 and w == wire.WIRE_LEN:
            n.op_type = r.delimited().decode("utf-8")
        elif fnum == 5 and w == wire.WIRE_LEN:
            n.attributes.append(_decode_attribute(r.delimited()))
        elif fnum == 7 and w == wire.WIRE_LEN:
            n.domain = r.delimited().decode("utf-8")
        else:
            r.skip(w)
    return n


def _decode_graph(data: bytes) -> PbGraph:
    r = wire.Reader(data)
    g = PbGraph()
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1 and w == wire.WIRE_LEN:
            g.nodes.append(_decode_node(r.delimited()))
        elif fnum == 2 and w == wire.WIRE_LEN:
            g.name = r.delimited().decode("utf-8")
        elif fnum == 5 and w == wire.WIRE_LEN:
            g.initializers.append(_decode_tensor(r.delimited()))
        elif fnum == 11 and w == wire.WIRE_LEN:
            g.inputs.append(_decode_value_info(r.delimited()))
        elif fnum == 12 and w == wire.WIRE_LEN:
            g.outputs.append(_decode_value_info(r.delimited()))
        elif fnum == 13 and w == wire.WIRE_LEN:
            g.value_infos.append(_decode_value_info(r.delimited()))
        else:
            r.skip(w)
    return g


def decode_model(data: bytes) -> PbModel:
    """Decode a serialized ModelProto, raising MalformedFile on bad wire data."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedFile("expected a byte sequence")
    r = wire.Reader(bytes(data))
    m = PbModel(ir_version=0)
    while not r.at_end():
        fnum, w = r.tag()
        if fnum == 1 and w == wire.WIRE_VARINT:
            m.ir_version = r.signed_varint()
        elif fnum == 2 and w == wire.WIRE_LEN:
            m.producer_name = r.delimited().decode("utf-8", errors="replace")
        elif fnum == 7 and w == wire.WIRE_LEN:
            m.graph = _decode_graph(r.delimited())
        elif fnum == 8 and w == wire.WIRE_LEN:
            or_ = wire.Reader(r.delimited())
            domain, version = "", 0
            while not or_.at_end():
                ofnum, ow = or_.tag()
                if ofnum == 1 and ow == wire.WIRE_LEN:
                    domain = or_.delimited().decode("utf-8")
                elif ofnum == 2 and ow == wire.WIRE_VARINT:
                    version = or_.signed_varint()
                else:
                    or_.skip(ow)
            m.opset_imports.append((domain, version))
        else:
            r.skip(w)
    if m.graph is None:
        raise MalformedFile("stream decodes but carries no graph")
    return m


# ---------------------------------------------------------------------------
# encoding


def _encode_tensor(t: PbTensor) -> wire.Writer:
    w = wire.Writer()
    if t.dims:
        w.packed_varints(1, list(t.dims))
    w.int_field(2, t.data_type)
    if t.name:
        w.str_field(8, t.name)
    w.bytes_field(9, t.raw if t.raw is not None else b"")
    return w


def _encode_value_info(vi: PbValueInfo) -> wire.Writer:
    w = wire.Writer()
    w.str_field(1, vi.name)
    tensor_type = wire.Writer()
    if vi.elem_type is not None:
        tensor_type.int_field(1, vi.elem_type)
    if vi.dims is not None:
        shape = wire.Writer()
        for d in vi.dims:
            dim = wire.Writer()
            if d is not None:
                dim.int_field(1, d)
            shape.message_field(1, dim)
        tensor_type.message_field(2, shape)
    type_proto = wire.Writer()
    type_proto.message_field(1, tensor_type)
    w.message_field(2, type_proto)
    return w


def _encode_attribute(a: PbAttribute) -> wire.Writer:
    w = wire.Writer()
    w.str_field(1, a.name)
    if a.type == ATTR_FLOAT:
        w.float_field(2, a.f)
    elif a.type == ATTR_INT:
        w.int_field(3, a.i)
    elif a.type == ATTR_STRING:
        w.bytes_field(4, a.s)
    elif a.type == ATTR_TENSOR and a.t is not None:
        w.message_field(5, _encode_tensor(a.t))
    elif a.type == ATTR_FLOATS:
        for v in a.floats:  # unpacked per onnx.proto (proto2 default)
            w.float_field(7, v)
    elif a.type == ATTR_INTS:
        for v in a.ints:
            w.int_field(8, v)
    elif a.type == ATTR_STRINGS:
        for v in a.strings:
            w.bytes_field(9, v)
    else:
        raise MalformedFile(f"attribute '{a.name}': unsupported type {a.type}")
    w.int_field(20, a.type)
    return w


def _encode_node(n: PbNode) -> wire.Writer:
    w = wire.Writer()
    for name in n.inputs:
        w.str_field(1, name)
    for name in n.outputs:
        w.str_field(2, name)
    if n.name:
        w.str_field(3, n.name)
    w.str_field(4, n.op_type)
    for attr in n.attributes:
        w.message_field(5, _encode_attribute(attr))
    if n.domain:
        w.str_field(7, n.domain)
    return w


def encode_model(m: PbModel) -> bytes:
    w = wire.Writer()
    w.int_field(1, m.ir_version)
    if m.producer_name:
        w.str_field(2, m.producer_name)
    if m.graph is not None:
        g = wire.Writer()
        for node in m.graph.nodes:
            g.message_field(1, _encode_node(node))
        g.str_field(2, m.graph.name or "graph")
        for init in m.graph.initializers:
            g.message_field(5, _encode_tensor(init))
        for vi in m.graph.inputs:
            g.message_field(11, _encode_value_info(vi))
        for vi in m.graph.outputs:
            g.message_field(12, _encode_value_info(vi))
        for vi in m.graph.value_infos:
            g.message_field(13, _encode_value_info(vi))
        w.message_field(7, g)
    for domain, version in m.opset_imports:
        op = wire.Writer()
        if domain:
            op.str_field(1, domain)
        op.int_field(2, version)
        w.message_field(8, op)
    return w.getvalue()
