"""In-memory operator-graph representation.

A :class:`GraphIR` is a validated DAG of operator nodes over named value
edges, with parameter payloads kept alongside so downstream passes can fold
and refuse nothing they do not have to. Instances are treated as immutable
after construction: passes build new graphs via :func:`assemble_graph`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import onnx_file as of
from .exceptions import (
    CyclicGraph,
    DanglingReference,
    MalformedFile,
    MultipleComponents,
    UnsupportedConstruct,
)

MIN_OPSET = 9
MAX_OPSET = 20
DEFAULT_OPSET = 13

# Ops that carry nested graphs; rejected rather than silently mis-encoded.
SUBGRAPH_OPS = frozenset({"If", "Loop", "Scan"})

# Attribute payloads: plain Python scalars/tuples, or a PbTensor for
# tensor-valued attributes (Constant nodes) that never reach the encoder.
AttrValue = int | float | str | tuple | of.PbTensor


class ValueRole(Enum):
    GRAPH_INPUT = "graph_input"
    GRAPH_OUTPUT = "graph_output"
    PARAMETER = "parameter"
    ACTIVATION = "activation"


@dataclass(frozen=True)
class TensorShape:
    """Ordered dimensions; ``None`` marks an unknown extent."""

    dims: tuple[int | None, ...]

    def __post_init__(self):
        for d in self.dims:
            if d is not None and d < 0:
                raise ValueError(f"negative dimension {d}")

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def fully_known(self) -> bool:
        return all(d is not None for d in self.dims)

    def numel(self) -> int | None:
        total = 1
        for d in self.dims:
            if d is None:
                return None
            total *= d
        return total

    def render(self) -> str:
        if not self.dims:
            return "scalar"
        return "x".join("?" if d is None else str(d) for d in self.dims)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class ValueInfo:
    name: str
    shape: TensorShape | None
    role: ValueRole
    producer: int | None = None
    consumers: frozenset[int] = frozenset()
    elem_type: int | None = None


@dataclass
class NodeSpec:
    id: int
    op_type: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attrs: dict[str, AttrValue] = field(default_factory=dict)

    def attr_ints(self, name: str, default: tuple[int, ...] | None = None) -> tuple[int, ...] | None:
        v = self.attrs.get(name)
        if v is None:
            return default
        if isinstance(v, int):
            return (v,)
        return tuple(int(x) for x in v)

    def attr_int(self, name: str, default: int | None = None) -> int | None:
        v = self.attrs.get(name)
        return default if v is None else int(v)


@dataclass
class GraphIR:
    nodes: dict[int, NodeSpec]
    values: dict[str, ValueInfo]
    graph_inputs: tuple[str, ...]
    graph_outputs: tuple[str, ...]
    initializers: dict[str, of.PbTensor]
    provenance: dict[int, frozenset[int]]
    retired: frozenset[int] = frozenset()
    opset: int = DEFAULT_OPSET
    ir_version: int = 8

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def is_param(self, name: str) -> bool:
        return name in self.initializers

    def producer_of(self, name: str) -> NodeSpec | None:
        info = self.values[name]
        return None if info.producer is None else self.nodes[info.producer]

    def const_array(self, name: str) -> np.ndarray | None:
        """Materialize an initializer payload, None when absent/unsupported."""
        tensor = self.initializers.get(name)
        return None if tensor is None else tensor.to_numpy()


def topo_order(g: GraphIR) -> list[int]:
    """Node ids with every producer before its consumers.

    Ties break by ascending node id, so the ordering is stable across runs.
    """
    succ: dict[int, list[int]] = {nid: [] for nid in g.nodes}
    indeg = {nid: 0 for nid in g.nodes}
    for node in g.nodes.values():
        seen: set[int] = set()
        for name in node.inputs:
            info = g.values.get(name)
            if info is None or info.producer is None or info.producer in seen:
                continue
            seen.add(info.producer)
            succ[info.producer].append(node.id)
            indeg[node.id] += 1
    ready = [nid for nid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for nxt in succ[nid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(g.nodes):
        raise CyclicGraph("graph contains a directed cycle")
    return order


# Element-type propagation: most ops inherit the first input's type.
_FIXED_OUTPUT_TYPES = {
    "Shape": of.INT64,
    "Size": of.INT64,
    "NonZero": of.INT64,
    "ArgMax": of.INT64,
    "ArgMin": of.INT64,
}


def _propagate_elem_types(
    nodes_in_order: Iterable[NodeSpec], types: dict[str, int | None]
) -> None:
    for node in nodes_in_order:
        if node.op_type == "Cast":
            out_type: int | None = node.attr_int("to")
        elif node.op_type in _FIXED_OUTPUT_TYPES:
            out_type = _FIXED_OUTPUT_TYPES[node.op_type]
        else:
            out_type = next(
                (types[n] for n in node.inputs if n and types.get(n) is not None),
                None,
            )
        for out in node.outputs:
            types.setdefault(out, out_type)
            if types[out] is None:
                types[out] = out_type


def assemble_graph(
    nodes: Iterable[NodeSpec],
    graph_inputs: Sequence[str],
    graph_outputs: Sequence[str],
    initializers: Mapping[str, of.PbTensor],
    *,
    shapes: Mapping[str, TensorShape] | None = None,
    elem_types: Mapping[str, int] | None = None,
    provenance: Mapping[int, frozenset[int]] | None = None,
    retired: frozenset[int] = frozenset(),
    opset: int = DEFAULT_OPSET,
    ir_version: int = 8,
) -> GraphIR:
    """Validate structural invariants and produce an immutable GraphIR.

    All construction paths (file parsing, passes, generators, tests) funnel
    through here, so the DAG/connectivity/reference checks hold everywhere.
    """
    node_map: dict[int, NodeSpec] = {}
    for node in nodes:
        if not node.op_type:
            raise MalformedFile(f"node {node.id} has an empty op_type")
        if node.id in node_map:
            raise MalformedFile(f"duplicate node id {node.id}")
        node_map[node.id] = node

    shapes = dict(shapes or {})
    elem_types_in = dict(elem_types or {})
    inits = dict(initializers)

    producer: dict[str, int] = {}
    for node in node_map.values():
        for out in node.outputs:
            if not out:
                raise MalformedFile(f"node {node.id} has an empty output name")
            if out in producer:
                raise MalformedFile(f"value '{out}' produced twice")
            if out in inits or out in graph_inputs:
                raise MalformedFile(f"value '{out}' collides with a graph input or parameter")
            producer[out] = node.id

    if len(set(graph_inputs)) != len(graph_inputs):
        raise MalformedFile("duplicate graph input name")
    if len(set(graph_outputs)) != len(graph_outputs):
        raise MalformedFile("duplicate graph output name")

    defined = set(graph_inputs) | set(inits) | set(producer)
    consumers: dict[str, set[int]] = {}
    for node in node_map.values():
        for name in node.inputs:
            if not name:
                continue
            if name not in defined:
                raise DanglingReference(
                    f"node {node.id} ({node.op_type}) consumes undefined value '{name}'"
                )
            consumers.setdefault(name, set()).add(node.id)
    for name in graph_outputs:
        if name not in producer and name not in graph_inputs:
            raise DanglingReference(f"graph output '{name}' is never produced")

    # Weak connectivity over nodes, linked through shared non-parameter values.
    parent = {nid: nid for nid in node_map}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    touched: dict[str, int] = {}
    for node in node_map.values():
        for name in (*node.inputs, *node.outputs):
            if not name or name in inits:
                continue
            if name in touched:
                union(node.id, touched[name])
            else:
                touched[name] = node.id
    if node_map:
        roots = {find(nid) for nid in node_map}
        if len(roots) > 1:
            raise MultipleComponents(f"graph has {len(roots)} weakly connected components")

    values: dict[str, ValueInfo] = {}
    all_names = (
        list(graph_inputs)
        + [n for n in inits if n not in graph_inputs]
        + [o for node in node_map.values() for o in node.outputs]
    )
    graph_output_set = set(graph_outputs)
    for name in all_names:
        if name in graph_inputs:
            role = ValueRole.GRAPH_INPUT
        elif name in inits:
            role = ValueRole.PARAMETER
        elif name in graph_output_set:
            role = ValueRole.GRAPH_OUTPUT
        else:
            role = ValueRole.ACTIVATION
        if name in inits:
            shape: TensorShape | None = TensorShape(tuple(inits[name].dims))
            etype: int | None = inits[name].data_type or None
        else:
            shape = shapes.get(name)
            etype = elem_types_in.get(name)
        values[name] = ValueInfo(
            name=name,
            shape=shape,
            role=role,
            producer=producer.get(name),
            consumers=frozenset(consumers.get(name, ())),
            elem_type=etype,
        )

    if provenance is None:
        prov = {nid: frozenset((nid,)) for nid in node_map}
    else:
        prov = {nid: frozenset(provenance[nid]) for nid in node_map}

    g = GraphIR(
        nodes=node_map,
        values=values,
        graph_inputs=tuple(graph_inputs),
        graph_outputs=tuple(graph_outputs),
        initializers=inits,
        provenance=prov,
        retired=frozenset(retired),
        opset=opset,
        ir_version=ir_version,
    )
    order = topo_order(g)  # raises CyclicGraph

    types: dict[str, int | None] = {name: values[name].elem_type for name in values}
    _propagate_elem_types((node_map[nid] for nid in order), types)
    for name, etype in types.items():
        if etype is not None and values[name].elem_type is None:
            values[name] = ValueInfo(
                name=name,
                shape=values[name].shape,
                role=values[name].role,
                producer=values[name].producer,
                consumers=values[name].consumers,
                elem_type=etype,
            )
    return g


# ---------------------------------------------------------------------------
# ONNX parsing


def _attr_value(a: of.PbAttribute) -> AttrValue:
    if a.type == of.ATTR_INT:
        return int(a.i)
    if a.type == of.ATTR_FLOAT:
        return float(a.f)
    if a.type == of.ATTR_STRING:
        return a.s.decode("utf-8", errors="replace")
    if a.type == of.ATTR_INTS:
        return tuple(int(v) for v in a.ints)
    if a.type == of.ATTR_FLOATS:
        return tuple(float(v) for v in a.floats)
    if a.type == of.ATTR_STRINGS:
        return tuple(s.decode("utf-8", errors="replace") for s in a.strings)
    if a.type == of.ATTR_TENSOR and a.t is not None:
        return a.t
    raise UnsupportedConstruct(f"attribute '{a.name}' has unsupported type {a.type}")


def _spatial_rank(node: NodeSpec, inits: Mapping[str, of.PbTensor]) -> int | None:
    ks = node.attr_ints("kernel_shape")
    if ks is not None:
        return len(ks)
    if node.op_type == "Conv" and len(node.inputs) > 1:
        weight = inits.get(node.inputs[1])
        if weight is not None and len(weight.dims) >= 2:
            return len(weight.dims) - 2
    return None


def _materialize_defaults(node: NodeSpec, inits: Mapping[str, of.PbTensor]) -> None:
    """Fill the kernel-op attributes the text encoding always shows."""
    if node.op_type not in ("Conv", "MaxPool", "AveragePool"):
        return
    rank = _spatial_rank(node, inits)
    if rank is None:
        return
    if node.op_type == "Conv":
        if "kernel_shape" not in node.attrs and len(node.inputs) > 1:
            weight = inits.get(node.inputs[1])
            if weight is not None and len(weight.dims) >= 2:
                node.attrs["kernel_shape"] = tuple(weight.dims[2:])
        node.attrs.setdefault("dilations", (1,) * rank)
    node.attrs.setdefault("pads", (0,) * 2 * rank)
    node.attrs.setdefault("strides", (1,) * rank)


def parse_onnx(data: bytes) -> GraphIR:
    """Parse a serialized ONNX model into a validated GraphIR.

    Raises MalformedFile, CyclicGraph, DanglingReference, MultipleComponents
    or UnsupportedConstruct; anything else indicates a bug.
    """
    model = of.decode_model(data)
    graph = model.graph
    assert graph is not None

    opset = DEFAULT_OPSET
    for domain, version in model.opset_imports:
        if domain in ("", "ai.onnx"):
            opset = version
            if not MIN_OPSET <= version <= MAX_OPSET:
                raise UnsupportedConstruct(
                    f"opset {version} outside the accepted range "
                    f"[{MIN_OPSET}, {MAX_OPSET}]"
                )

    inits: dict[str, of.PbTensor] = {}
    for tensor in graph.initializers:
        if not tensor.name:
            raise MalformedFile("initializer without a name")
        inits[tensor.name] = tensor

    # Initializer-backed entries in graph.input describe parameters, not data.
    graph_inputs = [vi.name for vi in graph.inputs if vi.name not in inits]
    graph_outputs = [vi.name for vi in graph.outputs]

    shapes: dict[str, TensorShape] = {}
    elem_types: dict[str, int] = {}
    for vi in (*graph.inputs, *graph.outputs, *graph.value_infos):
        if vi.name in inits:
            continue
        if vi.dims is not None:
            shapes[vi.name] = TensorShape(vi.dims)
        if vi.elem_type:
            elem_types[vi.name] = vi.elem_type

    nodes: list[NodeSpec] = []
    for idx, pb_node in enumerate(graph.nodes):
        if pb_node.op_type in SUBGRAPH_OPS:
            raise UnsupportedConstruct(f"subgraph-bearing op '{pb_node.op_type}'")
        attrs: dict[str, AttrValue] = {}
        for a in pb_node.attributes:
            if a.has_graph:
                raise UnsupportedConstruct(
                    f"node {idx} ({pb_node.op_type}) carries a nested graph"
                )
            attrs[a.name] = _attr_value(a)
        node = NodeSpec(
            id=idx,
            op_type=pb_node.op_type,
            inputs=tuple(pb_node.inputs),
            outputs=tuple(n for n in pb_node.outputs if n),
            attrs=attrs,
        )
        _materialize_defaults(node, inits)
        nodes.append(node)

    return assemble_graph(
        nodes,
        graph_inputs,
        graph_outputs,
        inits,
        shapes=shapes,
        elem_types=elem_types,
        opset=opset,
        ir_version=model.ir_version or 8,
    )


# ---------------------------------------------------------------------------
# programmatic construction


class GraphBuilder:
    """Incremental GraphIR construction for generators and tests."""

    def __init__(self, opset: int = DEFAULT_OPSET):
        self.opset = opset
        self._nodes: list[NodeSpec] = []
        self._inputs: list[str] = []
        self._outputs: list[str] = []
        self._inits: dict[str, of.PbTensor] = {}
        self._shapes: dict[str, TensorShape] = {}
        self._types: dict[str, int] = {}
        self._counter = 0

    def fresh(self, stem: str = "v") -> str:
        self._counter += 1
        return f"{stem}{self._counter}"

    def input(self, name: str, shape: Sequence[int | None], elem_type: int = of.FLOAT) -> str:
        self._inputs.append(name)
        self._shapes[name] = TensorShape(tuple(shape))
        self._types[name] = elem_type
        return name

    def param(self, name: str, array: np.ndarray) -> str:
        self._inits[name] = of.PbTensor.from_numpy(name, np.asarray(array))
        return name

    def node(
        self,
        op_type: str,
        inputs: Sequence[str],
        outputs: int | Sequence[str] = 1,
        **attrs: AttrValue,
    ) -> tuple[str, ...]:
        if isinstance(outputs, int):
            out_names = tuple(self.fresh(f"{op_type.lower()}_out") for _ in range(outputs))
        else:
            out_names = tuple(outputs)
        def canon(v):
            if isinstance(v, np.ndarray):
                return of.PbTensor.from_numpy("", v)
            if isinstance(v, float):  # attribute floats are 32-bit on the wire
                return float(np.float32(v))
            if isinstance(v, tuple) and any(isinstance(x, float) for x in v):
                return tuple(float(np.float32(x)) for x in v)
            return v

        normalized: dict[str, AttrValue] = {k: canon(v) for k, v in attrs.items()}
        self._nodes.append(
            NodeSpec(
                id=len(self._nodes),
                op_type=op_type,
                inputs=tuple(inputs),
                outputs=out_names,
                attrs=normalized,
            )
        )
        return out_names

    def output(self, *names: str) -> None:
        self._outputs.extend(names)

    def build(self) -> GraphIR:
        return assemble_graph(
            self._nodes,
            self._inputs,
            self._outputs,
            self._inits,
            shapes=self._shapes,
            elem_types=self._types,
            opset=self.opset,
        )
