"""Reference executor over a fixed operator subset.

Exists purely as a differential-testing oracle: simplification passes are
proven lossless by executing graphs before and after. Kernels accumulate in
float64 and round to float32 at op boundaries, which keeps the differential
tolerance stable. Nothing here is tuned for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeMismatch, UnsupportedOp
from .graph import GraphBuilder, GraphIR, NodeSpec, topo_order

SUPPORTED_OPS = frozenset(
    {
        "Conv",
        "Relu",
        "MaxPool",
        "AveragePool",
        "GlobalAveragePool",
        "Gemm",
        "MatMul",
        "Add",
        "Mul",
        "Concat",
        "ReduceMean",
        "Identity",
        "Flatten",
        "Reshape",
        "Softmax",
        "BatchNormalization",
    }
)


@dataclass
class DenseTensor:
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        if tuple(self.data.shape) != tuple(self.shape):
            raise ShapeMismatch(
                f"tensor data has shape {self.data.shape}, declared {self.shape}"
            )

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "DenseTensor":
        arr = np.asarray(arr)
        return cls(shape=tuple(arr.shape), data=arr)


def _as_array(value) -> np.ndarray:
    return value.data if isinstance(value, DenseTensor) else np.asarray(value)


def _round_f32(arr: np.ndarray) -> np.ndarray:
    if arr.dtype.kind == "f":
        return arr.astype(np.float32)
    return arr


def _f64(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) if arr.dtype.kind == "f" else arr


def _windows(x: np.ndarray, kernel, strides, dilations) -> np.ndarray:
    """All pooling/conv receptive fields: (N, C, *out_spatial, *kernel)."""
    r = len(kernel)
    effective = tuple(dilations[i] * (kernel[i] - 1) + 1 for i in range(r))
    for i in range(r):
        if x.shape[2 + i] < effective[i]:
            raise ShapeMismatch(
                f"window extent {effective[i]} exceeds input {x.shape[2 + i]}"
            )
    win = sliding_window_view(x, effective, axis=tuple(range(2, 2 + r)))
    stride_index = tuple(
        [slice(None), slice(None)]
        + [slice(None, None, strides[i]) for i in range(r)]
        + [slice(None, None, dilations[i]) for i in range(r)]
    )
    return win[stride_index]


def _conv(node: NodeSpec, x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    r = x.ndim - 2
    kernel = node.attr_ints("kernel_shape", tuple(w.shape[2:]))
    strides = node.attr_ints("strides", (1,) * r)
    dilations = node.attr_ints("dilations", (1,) * r)
    pads = node.attr_ints("pads", (0,) * 2 * r)
    group = node.attr_int("group", 1)
    if x.shape[1] != w.shape[1] * group:
        raise ShapeMismatch(
            f"Conv weight expects {w.shape[1] * group} input channels, got {x.shape[1]}"
        )
    pad_width = [(0, 0), (0, 0)] + [(pads[i], pads[r + i]) for i in range(r)]
    xp = np.pad(x, pad_width)
    win = _windows(xp, kernel, strides, dilations)
    sp = "abc"[:r]
    kp = "uvw"[:r]
    sub = f"nc{sp}{kp},mc{kp}->nm{sp}"
    if group == 1:
        out = np.einsum(sub, win, w)
    else:
        cg = x.shape[1] // group
        mg = w.shape[0] // group
        pieces = [
            np.einsum(sub, win[:, gi * cg : (gi + 1) * cg], w[gi * mg : (gi + 1) * mg])
            for gi in range(group)
        ]
        out = np.concatenate(pieces, axis=1)
    if b is not None:
        out = out + b.reshape((1, -1) + (1,) * r)
    return out


def _pool(node: NodeSpec, x: np.ndarray, mode: str) -> np.ndarray:
    r = x.ndim - 2
    kernel = node.attr_ints("kernel_shape")
    if kernel is None:
        raise ShapeMismatch(f"{node.op_type} without kernel_shape")
    strides = node.attr_ints("strides", (1,) * r)
    dilations = node.attr_ints("dilations", (1,) * r)
    pads = node.attr_ints("pads", (0,) * 2 * r)
    pad_width = [(0, 0), (0, 0)] + [(pads[i], pads[r + i]) for i in range(r)]
    window_axes = tuple(range(-len(kernel), 0))
    if mode == "max":
        xp = np.pad(x, pad_width, constant_values=-np.inf)
        return _windows(xp, kernel, strides, dilations).max(axis=window_axes)
    xp = np.pad(x, pad_width)
    sums = _windows(xp, kernel, strides, dilations).sum(axis=window_axes)
    if node.attr_int("count_include_pad", 0):
        return sums / float(np.prod(kernel))
    ones = np.pad(np.ones_like(x), pad_width)
    counts = _windows(ones, kernel, strides, dilations).sum(axis=window_axes)
    return sums / counts


def _gemm(node: NodeSpec, a: np.ndarray, b: np.ndarray, c: np.ndarray | None) -> np.ndarray:
    if node.attr_int("transA", 0):
        a = a.T
    if node.attr_int("transB", 0):
        b = b.T
    alpha = float(node.attrs.get("alpha", 1.0))
    beta = float(node.attrs.get("beta", 1.0))
    out = alpha * (a @ b)
    if c is not None:
        out = out + beta * c
    return out


def _softmax(node: NodeSpec, x: np.ndarray) -> np.ndarray:
    axis = node.attr_int("axis", -1)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _reduce_mean(node: NodeSpec, x: np.ndarray, axes_input: np.ndarray | None) -> np.ndarray:
    axes = node.attr_ints("axes")
    if axes is None and axes_input is not None:
        axes = tuple(int(v) for v in axes_input.reshape(-1))
    keepdims = bool(node.attr_int("keepdims", 1))
    axis = None if axes is None else tuple(a % x.ndim for a in axes)
    return x.mean(axis=axis, keepdims=keepdims)


def _flatten(node: NodeSpec, x: np.ndarray) -> np.ndarray:
    axis = node.attr_int("axis", 1)
    if axis < 0:
        axis += x.ndim
    head = int(np.prod(x.shape[:axis], dtype=np.int64)) if axis else 1
    return x.reshape(head, -1)


def _reshape(node: NodeSpec, x: np.ndarray, target: np.ndarray) -> np.ndarray:
    tgt = [int(v) for v in target.reshape(-1)]
    dims = [x.shape[i] if t == 0 else t for i, t in enumerate(tgt)]
    return x.reshape(dims)


def _batch_norm(node: NodeSpec, x, scale, bias, mean, var) -> np.ndarray:
    eps = float(node.attrs.get("epsilon", 1e-5))
    stat_shape = (1, -1) + (1,) * (x.ndim - 2)
    return (x - mean.reshape(stat_shape)) / np.sqrt(var.reshape(stat_shape) + eps) * scale.reshape(
        stat_shape
    ) + bias.reshape(stat_shape)


def execute(
    g: GraphIR,
    inputs: dict[str, "DenseTensor | np.ndarray"],
    params: dict[str, "DenseTensor | np.ndarray"] | None = None,
) -> dict[str, DenseTensor]:
    """Evaluate all graph outputs; deterministic for identical inputs.

    Parameter tensors come from the graph's own initializer payloads;
    entries in ``params`` override them by name.
    """
    env: dict[str, np.ndarray] = {}
    for name in g.initializers:
        arr = g.const_array(name)
        if arr is not None:
            env[name] = _round_f32(np.asarray(arr))
    for name, value in (params or {}).items():
        env[name] = _round_f32(_as_array(value))
    for name, value in inputs.items():
        env[name] = _round_f32(_as_array(value))
    for name in g.graph_inputs:
        if name not in env:
            raise ShapeMismatch(f"graph input '{name}' not supplied")

    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op_type
        if op not in SUPPORTED_OPS:
            raise UnsupportedOp(f"no reference kernel for '{op}'")
        try:
            ins = [_f64(env[name]) if name else None for name in node.inputs]
            if op == "Conv":
                out = _conv(node, ins[0], ins[1], ins[2] if len(ins) > 2 else None)
            elif op == "Relu":
                out = np.maximum(ins[0], 0.0)
            elif op == "MaxPool":
                out = _pool(node, ins[0], "max")
            elif op == "AveragePool":
                out = _pool(node, ins[0], "avg")
            elif op == "GlobalAveragePool":
                out = ins[0].mean(axis=tuple(range(2, ins[0].ndim)), keepdims=True)
            elif op == "Gemm":
                out = _gemm(node, ins[0], ins[1], ins[2] if len(ins) > 2 else None)
            elif op == "MatMul":
                out = ins[0] @ ins[1]
            elif op == "Add":
                out = ins[0] + ins[1]
            elif op == "Mul":
                out = ins[0] * ins[1]
            elif op == "Concat":
                out = np.concatenate(ins, axis=node.attr_int("axis", 0))
            elif op == "ReduceMean":
                out = _reduce_mean(node, ins[0], ins[1] if len(ins) > 1 else None)
            elif op == "Identity":
                out = ins[0]
            elif op == "Flatten":
                out = _flatten(node, ins[0])
            elif op == "Reshape":
                out = _reshape(node, ins[0], ins[1])
            elif op == "Softmax":
                out = _softmax(node, ins[0])
            else:  # BatchNormalization
                out = _batch_norm(node, *ins[:5])
        except ValueError as exc:
            raise ShapeMismatch(f"node {nid} ({op}): {exc}") from exc
        env[node.outputs[0]] = _round_f32(np.asarray(out))
        for extra in node.outputs[1:]:
            env[extra] = env[node.outputs[0]]

    return {name: DenseTensor.wrap(env[name]) for name in g.graph_outputs}


# ---------------------------------------------------------------------------
# random instances for property/differential tests


def _rand_f32(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) * 0.5).astype(np.float32)


def random_instance(
    seed: int,
    max_nodes: int = 20,
    identity_rate: float = 0.15,
) -> tuple[GraphIR, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Seeded, connected, executable graph plus matching random tensors.

    Instances mix convolutional trunks, elementwise combinations and an
    occasional unfused MatMul+Add tail so that every simplification pass has
    material to act on. Identical seeds reproduce identical instances.
    """
    rng = np.random.default_rng(seed)
    b = GraphBuilder()
    params: dict[str, np.ndarray] = {}

    def add_param(stem: str, arr: np.ndarray) -> str:
        name = b.fresh(stem)
        b.param(name, arr)
        params[name] = arr
        return name

    channels = int(rng.integers(1, 4))
    side = int(rng.integers(6, 13))
    x_shape = (1, channels, side, side)
    b.input("x", x_shape)
    inputs = {"x": _rand_f32(rng, x_shape)}

    # (name, shape) pool of values eligible as operands
    pool: list[tuple[str, tuple[int, ...]]] = [("x", x_shape)]
    consumed: set[str] = set()
    n_nodes = 0
    budget = int(rng.integers(max(3, max_nodes // 2), max_nodes + 1))

    def emit(op: str, ins, shape, **attrs) -> str:
        nonlocal n_nodes
        (out,) = b.node(op, ins, **attrs)
        consumed.update(ins)
        pool.append((out, shape))
        n_nodes += 1
        return out

    while n_nodes < budget:
        name, shape = pool[int(rng.integers(len(pool)))]
        remaining = budget - n_nodes
        is_4d = len(shape) == 4
        choices = ["relu", "identity", "add", "mul"]
        if is_4d:
            choices += ["conv", "relu", "pool", "bn", "concat", "gap"]
            if remaining >= 3:
                choices += ["linear_tail"]
            if shape[2] >= 2:
                choices += ["pool"]
        if len(shape) == 2:
            choices += ["softmax"]
            if remaining >= 2:
                choices += ["linear_tail"]
        op = choices[int(rng.integers(len(choices)))]

        if op == "conv":
            k = int(rng.choice([1, 3]))
            if k > shape[2]:
                k = 1
            m = int(rng.integers(1, 9))
            pad = int(rng.integers(0, 2)) if k == 3 else 0
            w = add_param("w", _rand_f32(rng, (m, shape[1], k, k)))
            conv_ins = [name, w]
            if rng.random() < 0.5:
                conv_ins.append(add_param("bias", _rand_f32(rng, (m,))))
            out_side = shape[2] + 2 * pad - k + 1
            emit(
                "Conv",
                conv_ins,
                (1, m, out_side, out_side),
                dilations=(1, 1),
                kernel_shape=(k, k),
                pads=(pad, pad, pad, pad),
                strides=(1, 1),
            )
        elif op == "pool" and is_4d and shape[2] >= 2:
            k = 2 if shape[2] < 3 else int(rng.choice([2, 3]))
            stride = int(rng.choice([1, 2]))
            kind = "MaxPool" if rng.random() < 0.6 else "AveragePool"
            out_side = (shape[2] - k) // stride + 1
            emit(
                kind,
                [name],
                (shape[0], shape[1], out_side, out_side),
                kernel_shape=(k, k),
                pads=(0, 0, 0, 0),
                strides=(stride, stride),
            )
        elif op == "bn" and is_4d:
            c = shape[1]
            scale = add_param("scale", _rand_f32(rng, (c,)) + 1.0)
            bias = add_param("shift", _rand_f32(rng, (c,)))
            mean = add_param("mean", _rand_f32(rng, (c,)))
            var = add_param("var", np.abs(_rand_f32(rng, (c,))) + 0.5)
            emit("BatchNormalization", [name, scale, bias, mean, var], shape, epsilon=1e-5)
        elif op == "concat" and is_4d:
            emit(
                "Concat",
                [name, name],
                (shape[0], shape[1] * 2, *shape[2:]),
                axis=1,
            )
        elif op == "gap" and is_4d:
            if rng.random() < 0.5:
                emit("GlobalAveragePool", [name], (shape[0], shape[1], 1, 1))
            else:
                emit(
                    "ReduceMean",
                    [name],
                    (shape[0], shape[1]),
                    axes=(2, 3),
                    keepdims=0,
                )
        elif op == "linear_tail":
            if is_4d:
                flat = int(np.prod(shape[1:]))
                name = emit("Flatten", [name], (shape[0], flat), axis=1)
                shape = (shape[0], flat)
            feats = int(rng.integers(2, 7))
            w = add_param("lw", _rand_f32(rng, (shape[1], feats)))
            mm = emit("MatMul", [name, w], (shape[0], feats))
            bias = add_param("lb", _rand_f32(rng, (feats,)))
            emit("Add", [mm, bias], (shape[0], feats))
        elif op == "softmax" and len(shape) == 2:
            emit("Softmax", [name], shape, axis=1)
        elif op in ("add", "mul"):
            mates = [n for n, s in pool if s == shape]
            other = mates[int(rng.integers(len(mates)))]
            emit("Add" if op == "add" else "Mul", [name, other], shape)
        elif op == "identity":
            emit("Identity", [name], shape)
        else:
            emit("Relu", [name], shape)

    # Extra injected Identities on random existing values.
    for name, shape in list(pool):
        if rng.random() < identity_rate and n_nodes < max_nodes:
            emit("Identity", [name], shape)

    leaves = [name for name, _ in pool if name not in consumed]
    b.output(*leaves)
    g = b.build()
    return g, inputs, params
