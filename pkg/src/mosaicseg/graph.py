"""Typed computation graph with shape inference and a topological executor.

Nodes are appended via :func:`add_node` and may only reference nodes that
already exist, so a graph is acyclic by construction; ``topo_order`` still
detects cycles for defensively initialized graphs. Node kinds map one-to-one
onto the kernels in :mod:`mosaicseg.kernels`, plus a zero-cost ``Slice`` kind
for channel-range views (needed to lower grouped multi-kernel convolutions)
and an ``Input`` kind for the designated source.

Parameterized kinds read their weights from a mapping with role-suffixed
keys: ``<name>/kernel`` and optional ``<name>/bias`` for Conv,
``<name>/kernel`` for DepthwiseConv, ``<name>/scale`` and ``<name>/bias``
for Affine.
"""

import heapq
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .tensor import ConvParams, TensorShape, shape_of

NODE_KINDS = (
    "Input",
    "Conv",
    "DepthwiseConv",
    "AvgPoolGrid",
    "GlobalPool",
    "BilinearResize",
    "ConcatChannels",
    "Add",
    "Affine",
    "Relu",
    "Argmax",
    "Slice",
)

# arity: exact int, or (min, None) for variadic
_ARITY = {
    "Input": 0,
    "Conv": 1,
    "DepthwiseConv": 1,
    "AvgPoolGrid": 1,
    "GlobalPool": 1,
    "BilinearResize": 1,
    "ConcatChannels": (1, None),
    "Add": 2,
    "Affine": 1,
    "Relu": 1,
    "Argmax": 1,
    "Slice": 1,
}


@dataclass(frozen=True)
class NodeSpec:
    name: str
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ConfigError(f"unknown node kind {self.kind!r}")
        _validate_params(self.kind, self.params, self.name)


def _validate_params(kind, params, name):
    if kind == "Conv":
        conv = params.get("conv")
        if not isinstance(conv, ConvParams):
            raise ConfigError(f"node {name}: Conv requires a 'conv' ConvParams entry")
    elif kind == "DepthwiseConv":
        conv = params.get("conv")
        if not isinstance(conv, ConvParams) or not conv.is_depthwise:
            raise ConfigError(f"node {name}: DepthwiseConv requires depthwise ConvParams")
    elif kind == "AvgPoolGrid":
        gh, gw = params.get("grid_h", 0), params.get("grid_w", 0)
        if gh < 1 or gw < 1:
            raise ConfigError(f"node {name}: pool grid must be positive, got {gh}x{gw}")
    elif kind == "BilinearResize":
        oh, ow = params.get("out_h", 0), params.get("out_w", 0)
        if oh < 1 or ow < 1:
            raise ConfigError(f"node {name}: resize target must be positive, got {oh}x{ow}")
        if params.get("mode", "corner") not in kernels.VALID_RESIZE_MODES:
            raise ConfigError(f"node {name}: bad resize mode {params.get('mode')!r}")
    elif kind == "Affine":
        if params.get("channels", 0) < 1:
            raise ConfigError(f"node {name}: Affine needs a positive 'channels'")
    elif kind == "Slice":
        start, stop = params.get("start", -1), params.get("stop", -1)
        if start < 0 or stop <= start:
            raise ConfigError(f"node {name}: bad channel slice [{start}, {stop})")


class Graph:
    """DAG of NodeSpecs. Created with a single Input source node."""

    def __init__(self, source: str = "input"):
        self.nodes: dict[str, NodeSpec] = {}
        self.inputs: dict[str, tuple[str, ...]] = {}
        self.order: list[str] = []
        self.source = source
        self.outputs: list[str] = []
        self.taps: dict[str, str] = {}
        self._append(NodeSpec(source, "Input"), ())

    def _append(self, spec: NodeSpec, input_names: tuple[str, ...]):
        self.nodes[spec.name] = spec
        self.inputs[spec.name] = input_names
        self.order.append(spec.name)

    def add_node(self, spec: NodeSpec, inputs=()) -> str:
        """Append a node wired to existing nodes; returns its name."""
        if spec.name in self.nodes:
            raise ConfigError(f"duplicate node name {spec.name!r}")
        inputs = tuple(inputs)
        for ref in inputs:
            if ref == spec.name:
                raise ConfigError(f"node {spec.name!r} cannot reference itself (cycle)")
            if ref not in self.nodes:
                raise ConfigError(f"node {spec.name!r} references unknown input {ref!r}")
        arity = _ARITY[spec.kind]
        if isinstance(arity, tuple):
            if len(inputs) < arity[0]:
                raise ConfigError(
                    f"node {spec.name!r} ({spec.kind}) needs >= {arity[0]} inputs, got {len(inputs)}"
                )
        elif len(inputs) != arity:
            raise ConfigError(
                f"node {spec.name!r} ({spec.kind}) needs {arity} inputs, got {len(inputs)}"
            )
        self._append(spec, inputs)
        return spec.name

    def add_tap(self, tap: str, node: str):
        if node not in self.nodes:
            raise ConfigError(f"tap {tap!r} references unknown node {node!r}")
        self.taps[tap] = node

    def consumers(self) -> dict[str, int]:
        counts = {name: 0 for name in self.nodes}
        for refs in self.inputs.values():
            for ref in refs:
                counts[ref] += 1
        return counts


def topo_order(graph: Graph) -> list[str]:
    """Topological order with insertion-order tie-break; raises on cycles."""
    index = {name: i for i, name in enumerate(graph.order)}
    indegree = {name: len(graph.inputs[name]) for name in graph.order}
    dependents: dict[str, list[str]] = {name: [] for name in graph.order}
    for name, refs in graph.inputs.items():
        for ref in refs:
            dependents[ref].append(name)
    ready = [index[n] for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        name = graph.order[heapq.heappop(ready)]
        out.append(name)
        for dep in dependents[name]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, index[dep])
    if len(out) != len(graph.order):
        stuck = sorted(n for n, d in indegree.items() if d > 0)
        raise ConfigError(f"graph contains a cycle involving {stuck[:4]}")
    return out


def _infer_node(spec: NodeSpec, in_shapes: list[TensorShape]) -> TensorShape:
    kind, p = spec.kind, spec.params
    if kind in ("Conv", "DepthwiseConv"):
        conv: ConvParams = p["conv"]
        s = in_shapes[0]
        if s.c != conv.in_c:
            raise ShapeError(
                f"node {spec.name}: input has {s.c} channels, conv expects {conv.in_c}"
            )
        oh, _, _ = kernels.same_pad(s.h, conv.kernel_h, conv.stride, conv.dilation)
        ow, _, _ = kernels.same_pad(s.w, conv.kernel_w, conv.stride, conv.dilation)
        return TensorShape(oh, ow, conv.out_c)
    if kind == "AvgPoolGrid":
        s = in_shapes[0]
        if p["grid_h"] > s.h or p["grid_w"] > s.w:
            raise ConfigError(
                f"node {spec.name}: pool grid {p['grid_h']}x{p['grid_w']} exceeds input {s.h}x{s.w}"
            )
        return TensorShape(p["grid_h"], p["grid_w"], s.c)
    if kind == "GlobalPool":
        return TensorShape(1, 1, in_shapes[0].c)
    if kind == "BilinearResize":
        return TensorShape(p["out_h"], p["out_w"], in_shapes[0].c)
    if kind == "ConcatChannels":
        hw = (in_shapes[0].h, in_shapes[0].w)
        for s in in_shapes[1:]:
            if (s.h, s.w) != hw:
                raise ShapeError(f"node {spec.name}: concat spatial mismatch {(s.h, s.w)} vs {hw}")
        return TensorShape(hw[0], hw[1], sum(s.c for s in in_shapes))
    if kind == "Add":
        if in_shapes[0] != in_shapes[1]:
            raise ShapeError(
                f"node {spec.name}: add shape mismatch {in_shapes[0]} vs {in_shapes[1]}"
            )
        return in_shapes[0]
    if kind == "Affine":
        if in_shapes[0].c != p["channels"]:
            raise ShapeError(
                f"node {spec.name}: affine expects {p['channels']} channels, got {in_shapes[0].c}"
            )
        return in_shapes[0]
    if kind == "Relu":
        return in_shapes[0]
    if kind == "Argmax":
        s = in_shapes[0]
        return TensorShape(s.h, s.w, 1)
    if kind == "Slice":
        s = in_shapes[0]
        if p["stop"] > s.c:
            raise ShapeError(
                f"node {spec.name}: slice [{p['start']}, {p['stop']}) exceeds {s.c} channels"
            )
        return TensorShape(s.h, s.w, p["stop"] - p["start"])
    raise ConfigError(f"node {spec.name}: cannot infer shape for kind {kind}")


def infer_shapes(graph: Graph, input_shape: TensorShape) -> dict[str, TensorShape]:
    """Assign a shape to every node; fails atomically naming the bad node."""
    shapes: dict[str, TensorShape] = {}
    for name in topo_order(graph):
        spec = graph.nodes[name]
        if spec.kind == "Input":
            shapes[name] = input_shape
        else:
            shapes[name] = _infer_node(spec, [shapes[r] for r in graph.inputs[name]])
    return shapes


_WEIGHT_ROLES = {
    "Conv": ("kernel",),  # plus "bias" when params["bias"] is true
    "DepthwiseConv": ("kernel",),
    "Affine": ("scale", "bias"),
}


def weight_roles(spec: NodeSpec) -> tuple[str, ...]:
    roles = _WEIGHT_ROLES.get(spec.kind, ())
    if spec.kind == "Conv" and spec.params.get("bias", False):
        roles = roles + ("bias",)
    return roles


def expected_weight_shape(spec: NodeSpec, role: str) -> tuple[int, ...]:
    conv = spec.params.get("conv")
    if spec.kind in ("Conv", "DepthwiseConv") and role == "kernel":
        return conv.kernel_shape()
    if spec.kind == "Conv" and role == "bias":
        return (conv.out_c,)
    if spec.kind == "Affine":
        return (spec.params["channels"],)
    raise ConfigError(f"node {spec.name} has no weight role {role!r}")


def _run_node(spec: NodeSpec, ins: list[np.ndarray], weights) -> np.ndarray:
    kind, p = spec.kind, spec.params
    if kind == "Conv":
        conv = p["conv"]
        bias = weights[f"{spec.name}/bias"] if p.get("bias", False) else None
        return kernels.conv2d(ins[0], weights[f"{spec.name}/kernel"], bias, conv)
    if kind == "DepthwiseConv":
        return kernels.depthwise_conv2d(ins[0], weights[f"{spec.name}/kernel"], p["conv"])
    if kind == "AvgPoolGrid":
        return kernels.avg_pool_grid(ins[0], p["grid_h"], p["grid_w"])
    if kind == "GlobalPool":
        return kernels.global_avg_pool(ins[0])
    if kind == "BilinearResize":
        return kernels.bilinear_resize(ins[0], p["out_h"], p["out_w"], p.get("mode", "corner"))
    if kind == "ConcatChannels":
        return kernels.concat_channels(ins)
    if kind == "Add":
        return kernels.add_elementwise(ins[0], ins[1])
    if kind == "Affine":
        return kernels.affine_channels(
            ins[0], weights[f"{spec.name}/scale"], weights[f"{spec.name}/bias"]
        )
    if kind == "Relu":
        return kernels.relu(ins[0])
    if kind == "Argmax":
        return kernels.argmax_channels(ins[0])
    if kind == "Slice":
        return ins[0][:, :, p["start"]:p["stop"]].copy()
    raise ConfigError(f"cannot execute node kind {kind}")


def check_weights(graph: Graph, weights) -> None:
    """Every parameterized node has exactly its role entries, correctly shaped,
    and the store holds nothing else."""
    wanted: dict[str, tuple[int, ...]] = {}
    for name in graph.order:
        spec = graph.nodes[name]
        for role in weight_roles(spec):
            wanted[f"{name}/{role}"] = expected_weight_shape(spec, role)
    missing = [k for k in wanted if k not in weights]
    if missing:
        raise ConfigError(f"missing weight entries: {missing[:4]} (of {len(missing)})")
    orphans = [k for k in weights.keys() if k not in wanted]
    if orphans:
        raise ConfigError(f"orphan weight entries not used by any node: {orphans[:4]}")
    for key, shape in wanted.items():
        got = tuple(np.asarray(weights[key]).shape)
        if got != shape:
            raise ShapeError(f"weight {key}: shape {got} does not match node spec {shape}")


def execute(graph: Graph, weights, x: np.ndarray, fetch=None) -> dict[str, np.ndarray]:
    """Run the graph; returns {name: value} for fetch (default: outputs + taps).

    Intermediate buffers are dropped as soon as their last consumer ran.
    """
    shapes = infer_shapes(graph, shape_of(np.asarray(x)))
    check_weights(graph, weights)
    if fetch is None:
        fetch = list(dict.fromkeys(list(graph.outputs) + list(graph.taps.values())))
    for name in fetch:
        if name not in graph.nodes:
            raise ConfigError(f"fetch references unknown node {name!r}")
    keep = set(fetch)
    remaining = graph.consumers()

    values: dict[str, np.ndarray] = {}
    for name in topo_order(graph):
        spec = graph.nodes[name]
        if spec.kind == "Input":
            out = np.asarray(x, dtype=np.float32)
        else:
            out = _run_node(spec, [values[r] for r in graph.inputs[name]], weights)
        if spec.kind != "Argmax":
            got = shape_of(out)
            if got != shapes[name]:
                raise ShapeError(f"node {name}: executed shape {got} != inferred {shapes[name]}")
        values[name] = out
        for ref in graph.inputs[name]:
            remaining[ref] -= 1
            if remaining[ref] == 0 and ref not in keep:
                del values[ref]
    return {name: values[name] for name in fetch}


def describe_lines(graph: Graph, shapes: dict[str, TensorShape]) -> list[str]:
    """Line-oriented listing: name, kind, params, inputs, inferred shape."""
    lines = []
    for name in graph.order:
        spec = graph.nodes[name]
        lines.append(
            f"{name}  {spec.kind}  {_param_summary(spec)}  "
            f"<- {','.join(graph.inputs[name]) or '-'}  {shapes[name]}"
        )
    return lines


def _param_summary(spec: NodeSpec) -> str:
    p = spec.params
    if spec.kind in ("Conv", "DepthwiseConv"):
        conv: ConvParams = p["conv"]
        parts = (
            f"k={conv.kernel_h}x{conv.kernel_w} s={conv.stride} d={conv.dilation} "
            f"g={conv.groups} {conv.in_c}->{conv.out_c}"
        )
        if p.get("bias", False):
            parts += " bias"
        return parts
    if spec.kind == "AvgPoolGrid":
        return f"grid={p['grid_h']}x{p['grid_w']}"
    if spec.kind == "BilinearResize":
        return f"to={p['out_h']}x{p['out_w']} {p.get('mode', 'corner')}"
    if spec.kind == "Affine":
        return f"c={p['channels']}"
    if spec.kind == "Slice":
        return f"[{p['start']}:{p['stop']}]"
    return "-"
