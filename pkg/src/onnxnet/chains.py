"""Partition a graph into maximal branch-free chains.

Each chain becomes one line of the text encoding. A link n -> m exists when
n's sole output is consumed exactly once, by m, and that edge is m's only
non-parameter input; chains are the maximal paths under this relation and
therefore partition the node set.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import GraphIR, TensorShape, ValueRole, topo_order


@dataclass
class Chain:
    nodes: tuple[int, ...]
    head_inputs: tuple[str, ...]
    tail_outputs: tuple[str, ...]


@dataclass
class NamingTable:
    """Printable labels for every value the encoding may mention.

    ``labels`` holds the name used when a value appears as an argument
    (ValueN for cross-chain activations, shape literals for graph inputs
    and parameters). ``out_labels`` holds Out/OutN designations for graph
    outputs; a graph output that is also consumed internally carries both.
    """

    labels: dict[str, str]
    out_labels: dict[str, str]


def _shape_literal(shape: TensorShape | None) -> str:
    return "?" if shape is None else shape.render()


def _consumer_slots(g: GraphIR) -> dict[str, list[int]]:
    slots: dict[str, list[int]] = {}
    for node in g.nodes.values():
        for name in node.inputs:
            if name:
                slots.setdefault(name, []).append(node.id)
    return slots


def _activation_slots(g: GraphIR, node_id: int) -> list[str]:
    node = g.nodes[node_id]
    return [
        name
        for name in node.inputs
        if name and g.values[name].role is not ValueRole.PARAMETER
    ]


def _link_target(g: GraphIR, slots: dict[str, list[int]], node_id: int) -> int | None:
    node = g.nodes[node_id]
    if len(node.outputs) != 1:
        return None
    value = node.outputs[0]
    if value in g.graph_outputs:
        return None
    consuming = slots.get(value, [])
    if len(consuming) != 1:
        return None
    successor = consuming[0]
    if len(_activation_slots(g, successor)) != 1:
        return None
    return successor


def build_chains(g: GraphIR) -> tuple[list[Chain], NamingTable]:
    """Chains in topological order of their first node, plus naming."""
    slots = _consumer_slots(g)
    order = topo_order(g)
    link: dict[int, int | None] = {nid: _link_target(g, slots, nid) for nid in order}
    has_incoming = {target for target in link.values() if target is not None}

    chains: list[Chain] = []
    for nid in order:
        if nid in has_incoming:
            continue
        members = [nid]
        while (nxt := link[members[-1]]) is not None:
            members.append(nxt)
        head, tail = g.nodes[members[0]], g.nodes[members[-1]]
        chains.append(
            Chain(
                nodes=tuple(members),
                head_inputs=tuple(n for n in head.inputs if n),
                tail_outputs=tail.outputs,
            )
        )

    labels: dict[str, str] = {}
    out_labels: dict[str, str] = {}
    for idx, name in enumerate(g.graph_outputs):
        out_labels[name] = "Out" if idx == 0 else f"Out{idx + 1}"
    for name, info in g.values.items():
        if info.role is ValueRole.GRAPH_INPUT:
            labels[name] = _shape_literal(info.shape)
        elif info.role is ValueRole.PARAMETER:
            labels[name] = _shape_literal(info.shape)

    counter = 0
    for chain in chains:
        for name in chain.tail_outputs:
            if name in out_labels:
                if slots.get(name):
                    counter += 1
                    labels[name] = f"Value{counter}"
                else:
                    labels[name] = out_labels[name]
            else:
                counter += 1
                labels[name] = f"Value{counter}"
    # A graph input wired straight to an output never passes through a chain.
    for name in g.graph_outputs:
        labels.setdefault(name, out_labels[name])
    return chains, NamingTable(labels=labels, out_labels=out_labels)


def chain_cover_check(g: GraphIR, chains: list[Chain]) -> bool:
    """Independent oracle: partition, branch-freeness and maximality.

    Recomputes every condition from first principles rather than reusing
    build_chains machinery.
    """
    claimed = [nid for chain in chains for nid in chain.nodes]
    if sorted(claimed) != sorted(g.nodes):
        return False

    slot_count: dict[str, int] = {}
    for node in g.nodes.values():
        for name in node.inputs:
            if name:
                slot_count[name] = slot_count.get(name, 0) + 1

    def act_inputs(nid: int) -> list[str]:
        return [
            name
            for name in g.nodes[nid].inputs
            if name and g.values[name].role is not ValueRole.PARAMETER
        ]

    def links_to(a: int, b: int) -> bool:
        node = g.nodes[a]
        if len(node.outputs) != 1:
            return False
        value = node.outputs[0]
        if value in g.graph_outputs or slot_count.get(value, 0) != 1:
            return False
        ains = act_inputs(b)
        return ains == [value]

    for chain in chains:
        if not chain.nodes:
            return False
        for a, b in zip(chain.nodes, chain.nodes[1:]):
            if not links_to(a, b):
                return False
        head = chain.nodes[0]
        ains = act_inputs(head)
        if len(ains) == 1:
            producer = g.values[ains[0]].producer
            if producer is not None and links_to(producer, head):
                return False  # extensible at the head
        tail = chain.nodes[-1]
        tail_node = g.nodes[tail]
        if len(tail_node.outputs) == 1:
            value = tail_node.outputs[0]
            if value not in g.graph_outputs and slot_count.get(value, 0) == 1:
                consumer = next(
                    nid
                    for nid in g.nodes
                    if value in g.nodes[nid].inputs
                )
                if links_to(tail, consumer):
                    return False  # extensible at the tail
    return True
