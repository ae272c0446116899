"""Static output-shape computation over the supported operator subset.

Shapes follow ONNX operator semantics for the supported set; anything else
degrades to unknown dims so encoding stays total on arbitrary files. A
ShapeMismatch is raised only for contradictions between fully-known
extents (wrong channel counts, impossible kernels, inconsistent concats).
"""

from __future__ import annotations

from .exceptions import ShapeMismatch
from .graph import GraphIR, NodeSpec, TensorShape, assemble_graph, topo_order

Dim = int | None


def _conv_axis(size: Dim, kernel: int, pad_total: int, stride: int, dilation: int,
               ceil_mode: bool = False) -> Dim:
    if size is None:
        return None
    effective = dilation * (kernel - 1) + 1
    span = size + pad_total - effective
    if span < 0:
        raise ShapeMismatch(
            f"kernel extent {effective} exceeds padded input {size + pad_total}"
        )
    if ceil_mode:
        return -(-span // stride) + 1
    return span // stride + 1


def _pool_like(node: NodeSpec, x: TensorShape, channels: Dim | str = "same") -> TensorShape:
    rank = x.rank - 2
    if rank < 1:
        return _unknown_like(x)
    kernel = node.attr_ints("kernel_shape")
    if kernel is None or len(kernel) != rank:
        return _unknown_like(x)
    strides = node.attr_ints("strides", (1,) * rank)
    dilations = node.attr_ints("dilations", (1,) * rank)
    pads = node.attr_ints("pads", (0,) * 2 * rank)
    ceil_mode = bool(node.attr_int("ceil_mode", 0))
    auto_pad = node.attrs.get("auto_pad", "NOTSET")
    spatial: list[Dim] = []
    for i in range(rank):
        size = x.dims[2 + i]
        if auto_pad in ("SAME_UPPER", "SAME_LOWER"):
            spatial.append(None if size is None else -(-size // strides[i]))
        else:
            pad_total = 0 if auto_pad == "VALID" else pads[i] + pads[rank + i]
            spatial.append(
                _conv_axis(size, kernel[i], pad_total, strides[i], dilations[i], ceil_mode)
            )
    out_c = x.dims[1] if channels == "same" else channels
    return TensorShape((x.dims[0], out_c, *spatial))


def _unknown_like(x: TensorShape | None) -> TensorShape:
    if x is None or x.rank == 0:
        return TensorShape((None,))
    return TensorShape((None,) * x.rank)


def _broadcast(a: TensorShape, b: TensorShape) -> TensorShape:
    rank = max(a.rank, b.rank)
    da = (None,) * (rank - a.rank) + a.dims
    db = (None,) * (rank - b.rank) + b.dims
    # Missing leading dims broadcast as 1, not unknown.
    da = tuple(1 if i < rank - a.rank else d for i, d in enumerate(da))
    db = tuple(1 if i < rank - b.rank else d for i, d in enumerate(db))
    out: list[Dim] = []
    for x, y in zip(da, db):
        if x == 1:
            out.append(y)
        elif y == 1:
            out.append(x)
        elif x is None or y is None:
            out.append(None)
        elif x == y:
            out.append(x)
        else:
            raise ShapeMismatch(f"cannot broadcast {a} with {b}")
    return TensorShape(tuple(out))


def _matmul(a: TensorShape, b: TensorShape) -> TensorShape:
    if a.rank == 0 or b.rank == 0:
        return TensorShape((None,))
    da = a.dims if a.rank > 1 else (1, a.dims[0])
    db = b.dims if b.rank > 1 else (b.dims[0], 1)
    ka, kb = da[-1], db[-2]
    if ka is not None and kb is not None and ka != kb:
        raise ShapeMismatch(f"matmul inner dims disagree: {a} x {b}")
    batch = _broadcast(TensorShape(da[:-2]), TensorShape(db[:-2]))
    out = (*batch.dims, da[-2], db[-1])
    if a.rank == 1:
        out = (*out[:-2], out[-1])
    if b.rank == 1:
        out = out[:-1]
    return TensorShape(out)


def _reduce_dims(x: TensorShape, axes: tuple[int, ...] | None, keepdims: bool) -> TensorShape:
    if axes is None:
        axes = tuple(range(x.rank))
    norm = {a % x.rank for a in axes}
    if keepdims:
        return TensorShape(tuple(1 if i in norm else d for i, d in enumerate(x.dims)))
    return TensorShape(tuple(d for i, d in enumerate(x.dims) if i not in norm))


def _infer_node(node: NodeSpec, ins: list[TensorShape | None], g: GraphIR) -> list[TensorShape]:
    op = node.op_type
    x = ins[0] if ins else None

    if op in ("Relu", "Identity", "Softmax", "BatchNormalization"):
        first = x if x is not None else TensorShape((None,))
        return [first] + [_unknown_like(first)] * (len(node.outputs) - 1)

    if op in ("Add", "Mul"):
        if x is None or len(ins) < 2 or ins[1] is None:
            return [_unknown_like(x)]
        return [_broadcast(x, ins[1])]

    if op == "Conv":
        w = ins[1] if len(ins) > 1 else None
        if x is None or w is None or x.rank < 3 or w.rank != x.rank:
            return [_unknown_like(x)]
        group = node.attr_int("group", 1)
        in_c, w_c = x.dims[1], w.dims[1]
        if in_c is not None and w_c is not None and in_c != w_c * group:
            raise ShapeMismatch(
                f"Conv weight expects {w_c * group} input channels, got {in_c}"
            )
        probe = NodeSpec(
            id=node.id,
            op_type=op,
            inputs=node.inputs,
            outputs=node.outputs,
            attrs={"kernel_shape": tuple(w.dims[2:]), **node.attrs},
        )
        return [_pool_like(probe, x, channels=w.dims[0])]

    if op in ("MaxPool", "AveragePool"):
        if x is None or x.rank < 3:
            return [_unknown_like(x)] * len(node.outputs)
        out = _pool_like(node, x)
        return [out] * len(node.outputs)

    if op == "GlobalAveragePool":
        if x is None or x.rank < 3:
            return [_unknown_like(x)]
        return [TensorShape((x.dims[0], x.dims[1]) + (1,) * (x.rank - 2))]

    if op == "Gemm":
        b = ins[1] if len(ins) > 1 else None
        if x is None or b is None or x.rank != 2 or b.rank != 2:
            return [TensorShape((None, None))]
        da = x.dims[::-1] if node.attr_int("transA", 0) else x.dims
        db = b.dims[::-1] if node.attr_int("transB", 0) else b.dims
        if da[1] is not None and db[0] is not None and da[1] != db[0]:
            raise ShapeMismatch(f"Gemm inner dims disagree: {da[1]} vs {db[0]}")
        return [TensorShape((da[0], db[1]))]

    if op == "MatMul":
        if x is None or len(ins) < 2 or ins[1] is None:
            return [_unknown_like(x)]
        return [_matmul(x, ins[1])]

    if op == "Concat":
        axis = node.attr_int("axis")
        known = [s for s in ins if s is not None]
        if axis is None or not known:
            return [_unknown_like(x)]
        rank = known[0].rank
        if any(s.rank != rank for s in known) or len(known) != len(ins):
            return [_unknown_like(known[0])]
        axis %= rank
        dims: list[Dim] = []
        for i in range(rank):
            if i == axis:
                per = [s.dims[i] for s in known]
                dims.append(None if any(d is None for d in per) else sum(per))
            else:
                fixed = {s.dims[i] for s in known if s.dims[i] is not None}
                if len(fixed) > 1:
                    raise ShapeMismatch(
                        f"Concat inputs disagree on non-axis dim {i}: {sorted(fixed)}"
                    )
                dims.append(fixed.pop() if fixed else None)
        return [TensorShape(tuple(dims))]

    if op == "ReduceMean":
        if x is None:
            return [TensorShape((None,))]
        axes = node.attr_ints("axes")
        if axes is None and len(node.inputs) > 1:
            arr = g.const_array(node.inputs[1])
            if arr is not None:
                axes = tuple(int(v) for v in arr.reshape(-1))
        keepdims = bool(node.attr_int("keepdims", 1))
        return [_reduce_dims(x, axes, keepdims)]

    if op == "Flatten":
        if x is None or x.rank == 0:
            return [TensorShape((None, None))]
        axis = node.attr_int("axis", 1)
        if axis < 0:
            axis += x.rank
        axis = max(0, min(axis, x.rank))
        head = TensorShape(x.dims[:axis]).numel()
        tail = TensorShape(x.dims[axis:]).numel()
        return [TensorShape((head, tail))]

    if op == "Reshape":
        target = g.const_array(node.inputs[1]) if len(node.inputs) > 1 else None
        if target is None:
            tgt_info = g.initializers.get(node.inputs[1]) if len(node.inputs) > 1 else None
            rank = int(tgt_info.dims[0]) if tgt_info is not None and tgt_info.dims else (
                x.rank if x is not None else 1
            )
            return [TensorShape((None,) * max(rank, 1))]
        tgt = [int(v) for v in target.reshape(-1)]
        in_dims = x.dims if x is not None else ()
        out: list[Dim] = []
        neg = None
        for i, t in enumerate(tgt):
            if t == 0:
                out.append(in_dims[i] if i < len(in_dims) else None)
            elif t == -1:
                neg = i
                out.append(None)
            else:
                out.append(t)
        if neg is not None and x is not None:
            total = x.numel()
            rest = 1
            for i, d in enumerate(out):
                if i != neg:
                    rest = None if (rest is None or d is None) else rest * d
            if total is not None and rest:
                out[neg] = total // rest
        return [TensorShape(tuple(out))]

    # Outside the supported subset: keep any shape the file declared,
    # otherwise unknown dims at the first input's rank.
    return [_unknown_like(x)] * max(len(node.outputs), 1)


def infer_shapes(g: GraphIR) -> GraphIR:
    """Return a graph whose every activation value carries a TensorShape.

    Idempotent: a second application reproduces identical shapes.
    """
    supported = SUPPORTED_OPS
    shapes: dict[str, TensorShape] = {
        name: info.shape
        for name, info in g.values.items()
        if info.shape is not None
    }
    for nid in topo_order(g):
        node = g.nodes[nid]
        ins = [shapes.get(name) for name in node.inputs]
        if node.op_type in supported:
            outs = _infer_node(node, ins, g)
        else:
            declared = [shapes.get(name) for name in node.outputs]
            outs = [
                d if d is not None else _unknown_like(ins[0] if ins else None)
                for d in declared
            ]
        for name, shape in zip(node.outputs, outs):
            shapes[name] = shape
        for name in node.outputs[len(outs):]:
            shapes[name] = _unknown_like(ins[0] if ins else None)
    elem_types = {
        name: info.elem_type
        for name, info in g.values.items()
        if info.elem_type is not None
    }
    return assemble_graph(
        g.nodes.values(),
        g.graph_inputs,
        g.graph_outputs,
        g.initializers,
        shapes=shapes,
        elem_types=elem_types,
        provenance=g.provenance,
        retired=g.retired,
        opset=g.opset,
        ir_version=g.ir_version,
    )


SUPPORTED_OPS = frozenset(
    {
        "Conv",
        "Relu",
        "MaxPool",
        "AveragePool",
        "Gemm",
        "MatMul",
        "Add",
        "Mul",
        "Concat",
        "ReduceMean",
        "Identity",
        "Flatten",
        "Reshape",
        "BatchNormalization",
        "GlobalAveragePool",
        "Softmax",
    }
)
