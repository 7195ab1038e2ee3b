"""Fusion-network graphs, weight initialization, forward eval, weight files.

Two graphs are constructible: the dual-branch fusion network (a spatial
"global" branch of strided depthwise convs plus upsampling, and a "detail"
branch of three 1x1 convs, merged by addition and tanh), and a single-branch
trial network of three separable convs.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import nn_ops, tensor_core
from .nn_ops import DepthwiseKernel, PointwiseKernel

__all__ = [
    "LayerSpec",
    "ModelGraph",
    "WeightFormatError",
    "build_lightfuse",
    "build_tcnn",
    "param_entries",
    "graph_param_entries",
    "count_params",
    "init_weights",
    "get_param",
    "layer_kernels",
    "run_layer",
    "run_branch",
    "forward",
    "save_weights",
    "load_weights",
    "DETAIL_LAYER_NAMES",
    "DETAIL_CHANNELS",
]

LAYER_KINDS = ("depthwise", "pointwise", "separable", "upsample_nn", "relu", "tanh", "add")

# Canonical detail-branch structure; the tile-fused executor relies on it.
DETAIL_LAYER_NAMES = ("d1", "d2", "d3")
DETAIL_CHANNELS = (6, 32, 32, 3)


class WeightFormatError(ValueError):
    """Raised for malformed weight files or stores inconsistent with a graph."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    k: int = 1
    in_channels: int = 0
    out_channels: int = 0
    stride: int = 1
    bias: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind '{self.kind}'")


@dataclass(frozen=True)
class ModelGraph:
    """Branches evaluated independently from the 6-channel input.

    With merge_add_tanh the two branch outputs are summed and passed through
    tanh; otherwise the single branch output is returned as-is.
    """

    name: str
    branches: tuple
    merge_add_tanh: bool
    input_channels: int = 6
    spatial_divisor: int = 8


def _relu_after(name, channels):
    return LayerSpec(f"{name}_relu", "relu", in_channels=channels, out_channels=channels)


def build_lightfuse(encoder_relu: bool = True) -> ModelGraph:
    """The dual-branch fusion graph (1,574 parameters).

    encoder_relu toggles the activations after the global-branch encoder
    layers, which are otherwise a free design choice.
    """
    g = [LayerSpec("g1", "depthwise", k=3, in_channels=6, out_channels=6, stride=2)]
    if encoder_relu:
        g.append(_relu_after("g1", 6))
    g.append(LayerSpec("g2", "depthwise", k=3, in_channels=6, out_channels=6, stride=2))
    if encoder_relu:
        g.append(_relu_after("g2", 6))
    g.append(LayerSpec("g3", "separable", k=3, in_channels=6, out_channels=3, stride=2))
    if encoder_relu:
        g.append(_relu_after("g3", 3))
    g += [
        LayerSpec("up1", "upsample_nn", in_channels=3, out_channels=3),
        LayerSpec("up2", "upsample_nn", in_channels=3, out_channels=3),
        LayerSpec("up3", "upsample_nn", in_channels=3, out_channels=3),
    ]

    d = []
    for name, m, n in zip(DETAIL_LAYER_NAMES, DETAIL_CHANNELS[:-1], DETAIL_CHANNELS[1:]):
        d.append(LayerSpec(name, "pointwise", in_channels=m, out_channels=n))
        d.append(_relu_after(name, n))

    return ModelGraph(
        name="lightfuse",
        branches=(("global", tuple(g)), ("detail", tuple(d))),
        merge_add_tanh=True,
        input_channels=6,
        spatial_divisor=8,
    )


def build_tcnn() -> ModelGraph:
    """Single-branch trial network: three 3x3 separable convs, tanh output."""
    chans = (6, 32, 32, 3)
    layers = []
    for i, (m, n) in enumerate(zip(chans[:-1], chans[1:]), start=1):
        layers.append(LayerSpec(f"t{i}", "separable", k=3, in_channels=m, out_channels=n))
        if i < 3:
            layers.append(_relu_after(f"t{i}", n))
    layers.append(LayerSpec("t3_tanh", "tanh", in_channels=3, out_channels=3))
    return ModelGraph(
        name="tcnn",
        branches=(("main", tuple(layers)),),
        merge_add_tanh=False,
        input_channels=6,
        spatial_divisor=1,
    )


def param_entries(layer: LayerSpec):
    """(key, shape, fan_in) for each parameter tensor of a layer.

    fan_in 0 marks bias vectors (initialized to zero). Weight layout matches
    the weight-file contract: depthwise (k, k, channels), pointwise
    (in_channels, out_channels), bias (channels,).
    """
    n, k = layer.name, layer.k
    m, c = layer.in_channels, layer.out_channels
    if layer.kind == "depthwise":
        entries = [(f"{n}.weight", (k, k, m), k * k)]
        if layer.bias:
            entries.append((f"{n}.bias", (c,), 0))
        return entries
    if layer.kind == "pointwise":
        return [(f"{n}.weight", (m, c), m), (f"{n}.bias", (c,), 0)]
    if layer.kind == "separable":
        return [
            (f"{n}.dw.weight", (k, k, m), k * k),
            (f"{n}.pw.weight", (m, c), m),
            (f"{n}.pw.bias", (c,), 0),
        ]
    return []


def graph_param_entries(graph: ModelGraph):
    entries = []
    for _, layers in graph.branches:
        for layer in layers:
            entries.extend(param_entries(layer))
    return entries


def count_params(graph: ModelGraph) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in graph_param_entries(graph))


def init_weights(graph: ModelGraph, seed: int) -> dict:
    """Uniform [-sqrt(6/fan_in), +sqrt(6/fan_in)] weights, zero biases."""
    rng = np.random.default_rng(seed)
    store = {}
    for key, shape, fan_in in graph_param_entries(graph):
        if fan_in == 0:
            store[key] = np.zeros(shape, dtype=np.float32)
        else:
            bound = math.sqrt(6.0 / fan_in)
            store[key] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return store


def get_param(weights: dict, key: str) -> np.ndarray:
    try:
        return weights[key]
    except KeyError:
        raise WeightFormatError(f"missing parameter '{key}'") from None


def layer_kernels(layer: LayerSpec, weights: dict):
    """Kernel objects for a parameterized layer, reading from the store."""
    n = layer.name
    if layer.kind == "depthwise":
        bias = get_param(weights, f"{n}.bias") if layer.bias else None
        return (DepthwiseKernel(get_param(weights, f"{n}.weight"), bias, layer.stride),)
    if layer.kind == "pointwise":
        return (PointwiseKernel(get_param(weights, f"{n}.weight"), get_param(weights, f"{n}.bias")),)
    if layer.kind == "separable":
        return (
            DepthwiseKernel(get_param(weights, f"{n}.dw.weight"), None, layer.stride),
            PointwiseKernel(get_param(weights, f"{n}.pw.weight"), get_param(weights, f"{n}.pw.bias")),
        )
    raise ValueError(f"layer '{n}' has no kernels")


def run_layer(layer: LayerSpec, weights: dict, x: np.ndarray) -> np.ndarray:
    kind = layer.kind
    if kind == "depthwise":
        (kern,) = layer_kernels(layer, weights)
        return nn_ops.depthwise_forward(x, kern)
    if kind == "pointwise":
        (kern,) = layer_kernels(layer, weights)
        return nn_ops.pointwise_forward(x, kern)
    if kind == "separable":
        dw, pw = layer_kernels(layer, weights)
        return nn_ops.pointwise_forward(nn_ops.depthwise_forward(x, dw), pw)
    if kind == "upsample_nn":
        return nn_ops.upsample_nn(x)
    if kind == "relu":
        return nn_ops.relu(x)
    if kind == "tanh":
        return nn_ops.tanh(x)
    raise ValueError(f"layer kind '{kind}' is only valid in the merge stage")


def run_branch(layers, weights: dict, x: np.ndarray) -> np.ndarray:
    for layer in layers:
        x = run_layer(layer, weights, x)
    return x


def check_pair(graph: ModelGraph, under: np.ndarray, over: np.ndarray) -> None:
    for name, t in (("under", under), ("over", over)):
        if not isinstance(t, np.ndarray) or t.ndim != 3 or t.shape[2] != 3:
            raise ValueError(f"{name} input must have shape (H, W, 3)")
    if under.shape != over.shape:
        raise ValueError(f"dimension mismatch: under {under.shape[:2]} vs over {over.shape[:2]}")
    div = graph.spatial_divisor
    if under.shape[0] % div or under.shape[1] % div:
        raise ValueError(f"input dims must be divisible by {div}, got {under.shape[:2]}")


def forward(graph: ModelGraph, weights: dict, under: np.ndarray, over: np.ndarray) -> np.ndarray:
    """Evaluate the graph on an exposure pair (underexposed image first).

    Spatial bookkeeping is asserted after every layer; the result is
    (H, W, 3) with values in (-1, 1) for merged graphs.
    """
    check_pair(graph, under, over)
    x = np.concatenate((under, over), axis=2)
    h, w = x.shape[:2]
    outs = []
    for _, layers in graph.branches:
        y = x
        eh, ew = h, w
        for layer in layers:
            y = run_layer(layer, weights, y)
            if layer.kind in ("depthwise", "separable"):
                eh //= layer.stride
                ew //= layer.stride
            elif layer.kind == "upsample_nn":
                eh *= 2
                ew *= 2
            if y.shape[:2] != (eh, ew):
                raise RuntimeError(
                    f"layer '{layer.name}': expected {eh}x{ew} output, got {y.shape[:2]}"
                )
        outs.append(y)
    if graph.merge_add_tanh:
        if len(outs) != 2:
            raise RuntimeError("merge stage requires exactly two branches")
        out = nn_ops.tanh(nn_ops.add(outs[0], outs[1]))
    else:
        out = outs[0]
    if out.shape != (h, w, 3):
        raise RuntimeError(f"output shape {out.shape} does not match input {h}x{w}x3")
    tensor_core.require_finite(out, "model output")
    return out


_MAGIC = b"LFW1"


def save_weights(weights: dict, graph: ModelGraph) -> bytes:
    """Serialize the store in graph order (little-endian, format LFW1)."""
    entries = graph_param_entries(graph)
    blob = bytearray(_MAGIC)
    blob += struct.pack("<I", len(entries))
    for key, shape, _ in entries:
        arr = get_param(weights, key)
        if arr.shape != shape:
            raise WeightFormatError(
                f"shape mismatch for '{key}': store {arr.shape}, graph {shape}"
            )
        name = key.encode("utf-8")
        blob += struct.pack("<H", len(name))
        blob += name
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(blob)


def load_weights(data: bytes, graph: ModelGraph) -> dict:
    """Parse an LFW1 blob and validate every tensor shape against the graph."""
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise WeightFormatError(f"truncated file while reading {what}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != _MAGIC:
        raise WeightFormatError("bad magic: expected 'LFW1'")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    store = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "tensor name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, f"ndim of '{name}'"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, f"dims of '{name}'"))
        size = int(np.prod(dims)) if ndim else 1
        payload = take(4 * size, f"payload of '{name}'")
        if name in store:
            raise WeightFormatError(f"duplicate tensor '{name}'")
        store[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    if pos != len(data):
        raise WeightFormatError(f"{len(data) - pos} trailing bytes after last tensor")

    expected = graph_param_entries(graph)
    for key, shape, _ in expected:
        if key not in store:
            raise WeightFormatError(f"missing parameter '{key}'")
        if store[key].shape != shape:
            raise WeightFormatError(
                f"shape mismatch for '{key}': file {store[key].shape}, graph {shape}"
            )
    known = {key for key, _, _ in expected}
    for name in store:
        if name not in known:
            raise WeightFormatError(f"unexpected tensor '{name}'")
    return store
