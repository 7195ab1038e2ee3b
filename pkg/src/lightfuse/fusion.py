"""Tile-fused execution of the detail branch plus an off-chip traffic model.

The three 1x1 conv layers of the detail branch are evaluated tile by tile:
an input tile is loaded once, carried through all three layers in on-chip
buffers, and only the final features are written back. Because 1x1 convs
have no spatial extent, tiles never overlap and edge tiles are simply the
residual rectangles, so any tiling is bit-identical to the layer-by-layer
reference path (both run the same fixed-order kernels).

Traffic is a cost model, not a measurement: byte counters increment at the
points where a real accelerator would touch external memory. Peak on-chip
bytes for the fused schedule assume buffers preallocated for a full s x s
tile at the input width plus the two widest intermediate widths. The
unfused schedule streams one pixel at a time per layer, so its working set
is the widest (in + out) channel pair.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import model, nn_ops, tensor_core

__all__ = [
    "TileSpec",
    "TrafficReport",
    "tile_grid",
    "run_detailnet_fused",
    "run_detailnet_unfused",
    "sweep_tile_sizes",
    "fused_forward",
]

_BYTES_F32 = 4
# input tile channels + the two widest intermediate widths (6 + 32 + 32)
_FUSED_PEAK_CHANNELS = model.DETAIL_CHANNELS[0] + model.DETAIL_CHANNELS[1] + model.DETAIL_CHANNELS[2]


@dataclass(frozen=True)
class TileSpec:
    """Square tile side length; edge tiles may be smaller."""

    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"invalid tile size {self.s}")


@dataclass(frozen=True)
class TrafficReport:
    mode: str
    offchip_read_bytes: int
    offchip_write_bytes: int
    peak_onchip_bytes: int

    @property
    def total_offchip_bytes(self) -> int:
        return self.offchip_read_bytes + self.offchip_write_bytes

    def dump(self) -> str:
        return (
            f"mode={self.mode} reads={self.offchip_read_bytes}"
            f" writes={self.offchip_write_bytes} peak={self.peak_onchip_bytes}"
        )


def tile_grid(height: int, width: int, s: int):
    """Disjoint row-major tiles covering the full extent."""
    return [
        (r0, min(r0 + s, height), c0, min(c0 + s, width))
        for r0 in range(0, height, s)
        for c0 in range(0, width, s)
    ]


def _tile_side(tile) -> int:
    return tile.s if isinstance(tile, TileSpec) else int(tile)


def _detail_kernels(weights: dict):
    chans = model.DETAIL_CHANNELS
    kernels = []
    for i, name in enumerate(model.DETAIL_LAYER_NAMES):
        w = model.get_param(weights, f"{name}.weight")
        b = model.get_param(weights, f"{name}.bias")
        if w.shape != (chans[i], chans[i + 1]):
            raise model.WeightFormatError(
                f"shape mismatch for '{name}.weight': store {w.shape}, expected {(chans[i], chans[i + 1])}"
            )
        kernels.append(nn_ops.PointwiseKernel(w, b))
    return kernels


def _check_detail_input(x):
    if not isinstance(x, np.ndarray) or x.ndim != 3 or x.shape[2] != model.DETAIL_CHANNELS[0]:
        raise ValueError(f"detail-branch input must be (H, W, {model.DETAIL_CHANNELS[0]})")


def run_detailnet_fused(x: np.ndarray, weights: dict, tile) -> tuple:
    """All three 1x1 layers per tile before the next tile is touched.

    Returns (output, TrafficReport). Off-chip traffic reads the input once
    and writes the output once regardless of tile size; intermediates stay
    on chip.
    """
    _check_detail_input(x)
    h, w = x.shape[:2]
    s = _tile_side(tile)
    if not 1 <= s <= min(h, w):
        raise ValueError(f"invalid tile size {s} for {h}x{w} input")
    kernels = _detail_kernels(weights)
    out = np.empty((h, w, model.DETAIL_CHANNELS[-1]), dtype=x.dtype)
    reads = writes = 0
    for r0, r1, c0, c1 in tile_grid(h, w, s):
        t = x[r0:r1, c0:c1]
        npix = (r1 - r0) * (c1 - c0)
        reads += npix * model.DETAIL_CHANNELS[0] * _BYTES_F32
        for kern in kernels:
            t = nn_ops.relu(nn_ops.pointwise_forward(t, kern))
        out[r0:r1, c0:c1] = t
        writes += npix * model.DETAIL_CHANNELS[-1] * _BYTES_F32
    peak = s * s * _FUSED_PEAK_CHANNELS * _BYTES_F32
    return out, TrafficReport("fused", reads, writes, peak)


def run_detailnet_unfused(x: np.ndarray, weights: dict) -> tuple:
    """Layer-by-layer reference path: every intermediate goes off chip."""
    _check_detail_input(x)
    h, w = x.shape[:2]
    kernels = _detail_kernels(weights)
    reads = writes = 0
    y = x
    for kern in kernels:
        reads += h * w * kern.in_channels * _BYTES_F32
        y = nn_ops.relu(nn_ops.pointwise_forward(y, kern))
        writes += h * w * kern.out_channels * _BYTES_F32
    peak = max(k.in_channels + k.out_channels for k in kernels) * _BYTES_F32
    return y, TrafficReport("unfused", reads, writes, peak)


def sweep_tile_sizes(dims: tuple, s_values) -> list:
    """(s, peak_onchip_bytes) per tile size; traffic does not depend on s."""
    h, w = dims
    rows = []
    for s in s_values:
        if not 1 <= s <= min(h, w):
            raise ValueError(f"invalid tile size {s} for {h}x{w} input")
        rows.append((s, s * s * _FUSED_PEAK_CHANNELS * _BYTES_F32))
    return rows


def fused_forward(graph, weights: dict, under, over, tile) -> tuple:
    """Full forward pass with the detail branch run through the tiled executor.

    Bit-identical to model.forward for the dual-branch graph.
    """
    branches = dict(graph.branches)
    if not graph.merge_add_tanh or set(branches) != {"global", "detail"}:
        raise ValueError("tile-fused execution requires the dual-branch fusion graph")
    model.check_pair(graph, under, over)
    x = np.concatenate((under, over), axis=2)
    g_out = model.run_branch(branches["global"], weights, x)
    d_out, traffic = run_detailnet_fused(x, weights, tile)
    out = nn_ops.tanh(nn_ops.add(g_out, d_out))
    tensor_core.require_finite(out, "model output")
    return out, traffic


def time_paths(x: np.ndarray, weights: dict, tile, repetitions: int) -> dict:
    """Mean wall-clock seconds per run for both detail-branch paths."""
    results = {}
    for label, fn in (
        ("fused", lambda: run_detailnet_fused(x, weights, tile)),
        ("unfused", lambda: run_detailnet_unfused(x, weights)),
    ):
        t0 = time.perf_counter()
        for _ in range(repetitions):
            fn()
        results[label] = (time.perf_counter() - t0) / repetitions
    return results
