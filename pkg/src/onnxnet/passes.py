"""Lossless graph simplification passes.

Three passes run to a joint fixpoint under :func:`simplify`: elision of
output-preserving nodes, shape-level constant folding, and data-driven
subgraph fusion. Every pass is a pure function producing a fresh graph and
maintains provenance from surviving nodes back to original node ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import onnx_file as of
from .exceptions import FixpointNotReached, FoldOverflow
from .graph import (
    AttrValue,
    GraphIR,
    NodeSpec,
    TensorShape,
    ValueRole,
    assemble_graph,
    topo_order,
)
from .shape_inference import infer_shapes

DEFAULT_REMOVAL_OPS = frozenset({"Identity", "Dropout", "Cast"})

SIMPLIFY_MAX_ITERATIONS = 20


@dataclass
class PassReport:
    pass_name: str
    nodes_removed: int = 0
    nodes_merged: int = 0
    iterations: int = 1

    @property
    def changed(self) -> bool:
        return bool(self.nodes_removed or self.nodes_merged)


def _rebuild(
    g: GraphIR,
    nodes: Iterable[NodeSpec],
    initializers: dict[str, of.PbTensor],
    graph_outputs: Sequence[str],
    provenance: dict[int, frozenset[int]],
    retired: frozenset[int],
) -> GraphIR:
    keep_nodes = list(nodes)
    referenced = set(g.graph_inputs) | set(graph_outputs)
    for node in keep_nodes:
        referenced.update(n for n in node.inputs if n)
    inits = {name: t for name, t in initializers.items() if name in referenced}
    shapes = {
        name: info.shape
        for name, info in g.values.items()
        if info.shape is not None
    }
    elem_types = {
        name: info.elem_type
        for name, info in g.values.items()
        if info.elem_type is not None
    }
    return assemble_graph(
        keep_nodes,
        g.graph_inputs,
        graph_outputs,
        inits,
        shapes=shapes,
        elem_types=elem_types,
        provenance=provenance,
        retired=retired,
        opset=g.opset,
        ir_version=g.ir_version,
    )


# ---------------------------------------------------------------------------
# node removal


def _is_removable(g: GraphIR, node: NodeSpec, removal_ops: frozenset[str]) -> bool:
    if node.op_type not in removal_ops or not node.inputs:
        return False
    if node.op_type == "Identity":
        return len(node.outputs) == 1
    if node.op_type == "Dropout":
        # Inference form only: unused mask, no active training_mode flag.
        for extra in node.outputs[1:]:
            info = g.values.get(extra)
            if info is not None and (info.consumers or extra in g.graph_outputs):
                return False
        if len(node.inputs) > 2 and node.inputs[2]:
            mode = g.const_array(node.inputs[2])
            if mode is None or bool(np.asarray(mode).reshape(-1)[0]):
                return False
        return True
    if node.op_type == "Cast":
        src = g.values.get(node.inputs[0])
        target = node.attr_int("to")
        return src is not None and src.elem_type is not None and src.elem_type == target
    return False


def remove_low_importance(
    g: GraphIR, removal_ops: frozenset[str] = DEFAULT_REMOVAL_OPS
) -> tuple[GraphIR, PassReport]:
    """Elide nodes whose output provably equals their first input.

    Consumers are rewired to the elided node's input; provenance flows to
    the upstream producer when one survives, otherwise into the retired set.
    """
    report = PassReport("remove_low_importance")
    rewire: dict[str, str] = {}
    removed: list[NodeSpec] = []
    removed_ids: set[int] = set()

    def resolve(name: str) -> str:
        while name in rewire:
            name = rewire[name]
        return name

    output_slots = list(g.graph_outputs)

    for nid in topo_order(g):
        node = g.nodes[nid]
        if not _is_removable(g, node, removal_ops):
            continue
        src = resolve(node.inputs[0])
        out = node.outputs[0]
        if out in g.graph_outputs:
            if src in g.initializers:
                continue  # a parameter cannot become a graph output
            projected = [resolve(o) if o != out else src for o in output_slots]
            if len(set(projected)) != len(projected):
                continue  # elision would collapse two outputs onto one value
        rewire[out] = src
        removed.append(node)
        removed_ids.add(nid)

    if not removed:
        return g, report

    provenance = {
        nid: set(g.provenance[nid]) for nid in g.nodes if nid not in removed_ids
    }
    retired = set(g.retired)
    for node in removed:
        src_info = g.values.get(resolve(node.inputs[0]))
        upstream = src_info.producer if src_info is not None else None
        if upstream is not None and upstream in provenance:
            provenance[upstream] |= g.provenance[node.id]
        else:
            retired |= g.provenance[node.id]

    survivors = []
    for nid in sorted(set(g.nodes) - removed_ids):
        node = g.nodes[nid]
        survivors.append(
            NodeSpec(
                id=node.id,
                op_type=node.op_type,
                inputs=tuple(resolve(n) if n else n for n in node.inputs),
                outputs=node.outputs,
                attrs=dict(node.attrs),
            )
        )
    new_outputs = [resolve(o) for o in g.graph_outputs]
    report.nodes_removed = len(removed)
    new_g = _rebuild(
        g,
        survivors,
        dict(g.initializers),
        new_outputs,
        {nid: frozenset(p) for nid, p in provenance.items()},
        frozenset(retired),
    )
    return new_g, report


# ---------------------------------------------------------------------------
# constant folding


_CAST_TARGETS = of.NUMPY_DTYPES


def _const_attr_value(node: NodeSpec) -> np.ndarray | None:
    value = node.attrs.get("value")
    if isinstance(value, of.PbTensor):
        return value.to_numpy()
    if "value_int" in node.attrs:
        return np.asarray(node.attrs["value_int"], dtype=np.int64)
    if "value_float" in node.attrs:
        return np.asarray(node.attrs["value_float"], dtype=np.float32)
    if "value_ints" in node.attrs:
        return np.asarray(node.attrs["value_ints"], dtype=np.int64)
    if "value_floats" in node.attrs:
        return np.asarray(node.attrs["value_floats"], dtype=np.float32)
    return None


def _eval_const_node(
    node: NodeSpec,
    ins: list[np.ndarray | None],
    shapes: dict[str, TensorShape | None],
) -> np.ndarray | None:
    op = node.op_type
    if op == "Constant":
        return _const_attr_value(node)
    if op == "Shape":
        shape = shapes.get(node.inputs[0])
        if shape is None or not shape.fully_known:
            return None
        dims = np.asarray(shape.dims, dtype=np.int64)
        start = node.attr_int("start", 0) or 0
        end = node.attr_int("end")
        return dims[start:end] if end is not None else dims[start:]
    if any(v is None for v in ins):
        return None
    if op == "Gather":
        axis = node.attr_int("axis", 0)
        return np.take(ins[0], ins[1].astype(np.int64), axis=axis)
    if op == "Unsqueeze":
        axes = node.attr_ints("axes")
        if axes is None and len(ins) > 1:
            axes = tuple(int(v) for v in ins[1].reshape(-1))
        if axes is None:
            return None
        out = ins[0]
        for a in sorted(a % (out.ndim + 1) for a in axes):
            out = np.expand_dims(out, a)
        return out
    if op == "Squeeze":
        axes = node.attr_ints("axes")
        if axes is None and len(ins) > 1:
            axes = tuple(int(v) for v in ins[1].reshape(-1))
        if axes is None:
            return ins[0].squeeze()
        return ins[0].squeeze(axis=tuple(a % ins[0].ndim for a in axes))
    if op == "Concat":
        return np.concatenate(ins, axis=node.attr_int("axis", 0))
    if op == "Cast":
        dtype = _CAST_TARGETS.get(node.attr_int("to", 0))
        return None if dtype is None else ins[0].astype(dtype)
    if op == "Slice":
        if len(ins) < 3:
            return None
        data, starts, ends = ins[0], ins[1], ins[2]
        axes = ins[3] if len(ins) > 3 and ins[3] is not None else np.arange(len(starts))
        steps = ins[4] if len(ins) > 4 and ins[4] is not None else np.ones(len(starts), np.int64)
        slicer: list[slice] = [slice(None)] * data.ndim
        for st, en, ax, sp in zip(starts, ends, axes, steps):
            slicer[int(ax) % data.ndim] = slice(int(st), int(en), int(sp))
        return data[tuple(slicer)]
    if op == "Add":
        return ins[0] + ins[1]
    if op == "Mul":
        return ins[0] * ins[1]
    if op == "Reshape":
        tgt = [int(v) for v in ins[1].reshape(-1)]
        dims = [ins[0].shape[i] if t == 0 else t for i, t in enumerate(tgt)]
        return ins[0].reshape(dims)
    return None


FOLDABLE_OPS = frozenset(
    {
        "Constant",
        "Shape",
        "Gather",
        "Unsqueeze",
        "Squeeze",
        "Concat",
        "Cast",
        "Slice",
        "Add",
        "Mul",
        "Reshape",
    }
)


def fold_constants(
    g: GraphIR, element_budget: int = 1_000_000
) -> tuple[GraphIR, PassReport]:
    """Replace constant-computable nodes with parameter values.

    Folding is shape-level: exporter chains like Shape -> Gather ->
    Unsqueeze -> Concat feeding a Reshape collapse into a single constant
    target. Raises FoldOverflow if a folded tensor would exceed the budget.
    """
    report = PassReport("fold_constants", iterations=0)
    current = g
    while True:
        report.iterations += 1
        shaped = infer_shapes(current)
        shapes = {name: info.shape for name, info in shaped.values.items()}
        const: dict[str, np.ndarray] = {}
        for name in current.initializers:
            arr = current.const_array(name)
            if arr is not None:
                const[name] = arr

        folded: dict[int, tuple[str, np.ndarray]] = {}
        for nid in topo_order(current):
            node = current.nodes[nid]
            if node.op_type not in FOLDABLE_OPS or len(node.outputs) != 1:
                continue
            out = node.outputs[0]
            if out in current.graph_outputs:
                continue
            if node.op_type != "Constant" and node.op_type != "Shape":
                if not node.inputs or any(n and n not in const for n in node.inputs):
                    continue
            ins = [const.get(n) if n else None for n in node.inputs]
            result = _eval_const_node(node, ins, shapes)
            if result is None:
                continue
            result = np.asarray(result)
            if result.size > element_budget:
                raise FoldOverflow(
                    f"folding node {nid} ({node.op_type}) would materialize "
                    f"{result.size} elements (budget {element_budget})"
                )
            const[out] = result
            folded[nid] = (out, result)

        if not folded:
            return current, report

        report.nodes_removed += len(folded)
        survivors = [
            current.nodes[nid] for nid in sorted(set(current.nodes) - set(folded))
        ]
        inits = dict(current.initializers)
        consumed_by_survivor: set[str] = set()
        for node in survivors:
            consumed_by_survivor.update(n for n in node.inputs if n)
        for out, arr in folded.values():
            if out in consumed_by_survivor:
                inits[out] = of.PbTensor.from_numpy(out, arr)
        provenance = {
            nid: current.provenance[nid] for nid in current.nodes if nid not in folded
        }
        retired = set(current.retired)
        for nid in folded:
            retired |= current.provenance[nid]
        current = _rebuild(
            current,
            survivors,
            inits,
            current.graph_outputs,
            provenance,
            frozenset(retired),
        )


# ---------------------------------------------------------------------------
# pattern merging


@dataclass
class PatternMatch:
    consumed: tuple[int, ...]  # node ids, anchor first
    replacement: NodeSpec
    new_initializers: dict[str, of.PbTensor] = field(default_factory=dict)


@dataclass(frozen=True)
class PatternRule:
    """A named local rewrite; the matcher inspects a node's neighborhood."""

    name: str
    matcher: Callable[[GraphIR, NodeSpec], PatternMatch | None]


def _fresh_name(g: GraphIR, base: str, taken: set[str]) -> str:
    name = base
    k = 0
    while name in g.values or name in g.initializers or name in taken:
        k += 1
        name = f"{base}.{k}"
    taken.add(name)
    return name


def _sole_consumer(g: GraphIR, value: str) -> NodeSpec | None:
    info = g.values.get(value)
    if info is None or value in g.graph_outputs or len(info.consumers) != 1:
        return None
    return g.nodes[next(iter(info.consumers))]


def _match_matmul_add(g: GraphIR, node: NodeSpec) -> PatternMatch | None:
    if node.op_type != "MatMul" or len(node.inputs) != 2:
        return None
    a, w = node.inputs
    if a in g.initializers or w not in g.initializers:
        return None
    w_tensor = g.initializers[w]
    if len(w_tensor.dims) != 2:
        return None
    add = _sole_consumer(g, node.outputs[0])
    if add is None or add.op_type != "Add" or len(add.inputs) != 2:
        return None
    other = add.inputs[1] if add.inputs[0] == node.outputs[0] else add.inputs[0]
    if add.inputs.count(node.outputs[0]) != 1 or other not in g.initializers:
        return None
    bias = g.initializers[other]
    if len(bias.dims) != 1 or bias.dims[0] != w_tensor.dims[1]:
        return None

    taken: set[str] = set()
    wt_name = _fresh_name(g, f"{w}_T", taken)
    w_arr = w_tensor.to_numpy()
    if w_arr is not None:
        wt = of.PbTensor.from_numpy(wt_name, np.ascontiguousarray(w_arr.T))
    else:
        wt = of.PbTensor(
            name=wt_name,
            data_type=w_tensor.data_type,
            dims=tuple(reversed(w_tensor.dims)),
            raw=None,
        )
    replacement = NodeSpec(
        id=node.id,
        op_type="Gemm",
        inputs=(a, wt_name, other),
        outputs=add.outputs,
        attrs={"transB": 1},
    )
    return PatternMatch(
        consumed=(node.id, add.id),
        replacement=replacement,
        new_initializers={wt_name: wt},
    )


def _match_conv_bias(g: GraphIR, node: NodeSpec) -> PatternMatch | None:
    if node.op_type != "Conv" or len(node.inputs) != 2:
        return None
    weight = g.initializers.get(node.inputs[1])
    if weight is None or len(weight.dims) < 3:
        return None
    out_channels = weight.dims[0]
    rank = len(weight.dims)
    add = _sole_consumer(g, node.outputs[0])
    if add is None or add.op_type != "Add" or len(add.inputs) != 2:
        return None
    other = add.inputs[1] if add.inputs[0] == node.outputs[0] else add.inputs[0]
    if add.inputs.count(node.outputs[0]) != 1 or other not in g.initializers:
        return None
    bias = g.initializers[other]
    aligned = (1,) * (rank - len(bias.dims)) + tuple(bias.dims)
    if len(aligned) != rank or aligned[1] != out_channels:
        return None
    if any(d != 1 for i, d in enumerate(aligned) if i != 1):
        return None

    taken: set[str] = set()
    b_name = _fresh_name(g, f"{other}_1d", taken)
    b_arr = bias.to_numpy()
    if b_arr is not None:
        b1 = of.PbTensor.from_numpy(b_name, b_arr.reshape(out_channels))
    else:
        b1 = of.PbTensor(
            name=b_name, data_type=bias.data_type, dims=(out_channels,), raw=None
        )
    replacement = NodeSpec(
        id=node.id,
        op_type="Conv",
        inputs=(node.inputs[0], node.inputs[1], b_name),
        outputs=add.outputs,
        attrs=dict(node.attrs),
    )
    return PatternMatch(
        consumed=(node.id, add.id),
        replacement=replacement,
        new_initializers={b_name: b1},
    )


MATMUL_ADD_TO_GEMM = PatternRule("matmul_add_to_gemm", _match_matmul_add)
CONV_BIAS_FUSION = PatternRule("conv_bias_fusion", _match_conv_bias)

DEFAULT_RULES: tuple[PatternRule, ...] = (MATMUL_ADD_TO_GEMM, CONV_BIAS_FUSION)


def merge_patterns(
    g: GraphIR, rules: Sequence[PatternRule] = DEFAULT_RULES
) -> tuple[GraphIR, PassReport]:
    """Replace non-overlapping rule matches, scanned in topological order.

    Earliest match wins; a node joins at most one match per invocation.
    """
    report = PassReport("merge_patterns")
    matches: list[PatternMatch] = []
    taken: set[int] = set()
    for nid in topo_order(g):
        if nid in taken:
            continue
        node = g.nodes[nid]
        for rule in rules:
            m = rule.matcher(g, node)
            if m is not None and not (set(m.consumed) & taken):
                matches.append(m)
                taken.update(m.consumed)
                break
    if not matches:
        return g, report

    replacements = {m.consumed[0]: m for m in matches}
    consumed_ids = {nid for m in matches for nid in m.consumed}
    nodes: list[NodeSpec] = []
    for nid in sorted(g.nodes):
        if nid in replacements:
            nodes.append(replacements[nid].replacement)
        elif nid not in consumed_ids:
            nodes.append(g.nodes[nid])
    inits = dict(g.initializers)
    for m in matches:
        inits.update(m.new_initializers)
    provenance = {
        nid: g.provenance[nid] for nid in g.nodes if nid not in consumed_ids
    }
    for m in matches:
        merged: frozenset[int] = frozenset()
        for nid in m.consumed:
            merged |= g.provenance[nid]
        provenance[m.replacement.id] = merged
    report.nodes_merged = sum(len(m.consumed) for m in matches)
    report.nodes_removed = report.nodes_merged - len(matches)
    new_g = _rebuild(g, nodes, inits, g.graph_outputs, provenance, g.retired)
    return new_g, report


# ---------------------------------------------------------------------------
# driver + serialization


def simplify(
    g: GraphIR,
    *,
    removal_ops: frozenset[str] = DEFAULT_REMOVAL_OPS,
    rules: Sequence[PatternRule] = DEFAULT_RULES,
    element_budget: int = 1_000_000,
    max_iterations: int = SIMPLIFY_MAX_ITERATIONS,
) -> tuple[GraphIR, list[PassReport]]:
    """Run all passes to a fixpoint; node count never increases."""
    reports: list[PassReport] = []
    for _ in range(max_iterations):
        changed = False
        for run in (
            lambda cur: remove_low_importance(cur, removal_ops),
            lambda cur: fold_constants(cur, element_budget),
            lambda cur: merge_patterns(cur, rules),
        ):
            g, report = run(g)
            reports.append(report)
            changed = changed or report.changed
        if not changed:
            return g, reports
    raise FixpointNotReached(
        f"simplification still changing after {max_iterations} iterations"
    )


def _attr_to_pb(name: str, value: AttrValue) -> of.PbAttribute:
    if isinstance(value, of.PbTensor):
        return of.PbAttribute(name=name, type=of.ATTR_TENSOR, t=value)
    if isinstance(value, bool):
        return of.PbAttribute(name=name, type=of.ATTR_INT, i=int(value))
    if isinstance(value, int):
        return of.PbAttribute(name=name, type=of.ATTR_INT, i=value)
    if isinstance(value, float):
        return of.PbAttribute(name=name, type=of.ATTR_FLOAT, f=value)
    if isinstance(value, str):
        return of.PbAttribute(name=name, type=of.ATTR_STRING, s=value.encode("utf-8"))
    items = list(value)
    if any(isinstance(v, float) for v in items):
        return of.PbAttribute(
            name=name, type=of.ATTR_FLOATS, floats=[float(v) for v in items]
        )
    if any(isinstance(v, str) for v in items):
        return of.PbAttribute(
            name=name,
            type=of.ATTR_STRINGS,
            strings=[str(v).encode("utf-8") for v in items],
        )
    return of.PbAttribute(name=name, type=of.ATTR_INTS, ints=[int(v) for v in items])


def _value_info_pb(g: GraphIR, name: str) -> of.PbValueInfo:
    info = g.values[name]
    dims = None if info.shape is None else tuple(info.shape.dims)
    return of.PbValueInfo(name=name, elem_type=info.elem_type or of.FLOAT, dims=dims)


def serialize(g: GraphIR) -> bytes:
    """Emit ONNX ModelProto bytes that re-parse into an isomorphic graph."""
    pb_nodes = []
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        pb_nodes.append(
            of.PbNode(
                op_type=node.op_type,
                name=f"node_{nid}",
                inputs=list(node.inputs),
                outputs=list(node.outputs),
                attributes=[_attr_to_pb(k, v) for k, v in node.attrs.items()],
            )
        )
    value_infos = [
        _value_info_pb(g, name)
        for name, info in g.values.items()
        if info.role == ValueRole.ACTIVATION and info.shape is not None
    ]
    graph = of.PbGraph(
        name="graph",
        nodes=pb_nodes,
        initializers=[g.initializers[name] for name in g.initializers],
        inputs=[_value_info_pb(g, name) for name in g.graph_inputs],
        outputs=[_value_info_pb(g, name) for name in g.graph_outputs],
        value_infos=value_infos,
    )
    model = of.PbModel(
        ir_version=g.ir_version,
        producer_name="onnxnet",
        opset_imports=[("", g.opset)],
        graph=graph,
    )
    return of.encode_model(model)
