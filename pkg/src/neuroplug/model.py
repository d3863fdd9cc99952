"""Network geometry, synthetic data, convolution forward passes and NSQF helpers.

All numeric work is done on 8-bit signed elements with 32-bit accumulators so
results are deterministic across platforms.  Weights and inputs are generated
from explicit seeds; nothing here keeps mutable state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, ShapeError

INT8_MIN, INT8_MAX = -128, 127


@dataclass(frozen=True)
class LayerShape:
    """Geometry of one convolution layer.

    k: output feature maps, c: input channels, h/w: input rows/cols,
    r/s: filter rows/cols, pool: downsample factor per axis (1 = none).
    """

    k: int
    c: int
    h: int
    w: int
    r: int
    s: int
    stride: int = 1
    pad: int = 0
    pool: int = 1
    bytes_per_elem: int = 1

    @property
    def p(self) -> int:
        """Output rows before pooling."""
        return (self.h + 2 * self.pad - self.r) // self.stride + 1

    @property
    def q(self) -> int:
        """Output cols before pooling."""
        return (self.w + 2 * self.pad - self.s) // self.stride + 1

    @property
    def p_out(self) -> int:
        return self.p // self.pool

    @property
    def q_out(self) -> int:
        return self.q // self.pool

    def validate(self) -> None:
        for name in ("k", "c", "h", "w", "r", "s", "stride", "pool", "bytes_per_elem"):
            if getattr(self, name) < 1:
                raise ShapeError(f"layer field {name} must be >= 1")
        if self.pad < 0:
            raise ShapeError("pad must be >= 0")
        if self.p < 1 or self.q < 1:
            raise ShapeError("filter larger than padded input")
        if self.p % self.pool or self.q % self.pool:
            raise ShapeError(f"pool {self.pool} must divide output dims {self.p}x{self.q}")


@dataclass(frozen=True)
class TilingSpec:
    """Tiling factors for one layer (counts, not bytes)."""

    tk: int
    tc: int
    th: int
    tw: int

    def validate(self, shape: LayerShape) -> None:
        if not (1 <= self.tk <= shape.k):
            raise ShapeError(f"tk={self.tk} outside [1, {shape.k}]")
        if not (1 <= self.tc <= shape.c):
            raise ShapeError(f"tc={self.tc} outside [1, {shape.c}]")
        if not (1 <= self.th <= shape.h):
            raise ShapeError(f"th={self.th} outside [1, {shape.h}]")
        if not (1 <= self.tw <= shape.w):
            raise ShapeError(f"tw={self.tw} outside [1, {shape.w}]")


def auto_tile(shape: LayerShape, target_bytes: int = 2048) -> TilingSpec:
    """Pick a deep-tile shape with roughly target_bytes per tile."""
    th = tw = min(shape.h, 8)
    tc = max(1, min(shape.c, target_bytes // (th * tw * shape.bytes_per_elem)))
    return TilingSpec(tk=shape.k, tc=tc, th=th, tw=min(shape.w, tw))


@dataclass(frozen=True)
class Layer:
    shape: LayerShape
    tiling: TilingSpec
    sparsity: float = 0.0


@dataclass
class NetworkSpec:
    """Ordered conv layers plus skip connections (source idx < dest idx)."""

    layers: list[Layer]
    skips: list[tuple[int, int]] = field(default_factory=list)
    name: str = ""

    def validate(self) -> None:
        if not self.layers:
            raise ConfigError("network has no layers")
        for i, layer in enumerate(self.layers):
            layer.shape.validate()
            layer.tiling.validate(layer.shape)
            if not (0.0 <= layer.sparsity < 1.0):
                raise ConfigError(f"layer {i}: sparsity must be in [0, 1)")
        for i in range(len(self.layers) - 1):
            cur, nxt = self.layers[i].shape, self.layers[i + 1].shape
            if nxt.c != cur.k:
                raise ConfigError(f"layer {i + 1}: c={nxt.c} != previous k={cur.k}")
            if nxt.h != cur.p_out or nxt.w != cur.q_out:
                raise ConfigError(
                    f"layer {i + 1}: input {nxt.h}x{nxt.w} != previous output "
                    f"{cur.p_out}x{cur.q_out}"
                )
        for src, dst in self.skips:
            if not (0 <= src < dst < len(self.layers)):
                raise ConfigError(f"skip ({src}, {dst}) must satisfy 0 <= src < dst < n")


@dataclass(frozen=True)
class Tensor3D:
    """Signed 8-bit tensor with explicit (channels, rows, cols) dims."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError("Tensor3D needs 3 dims (channels, rows, cols)")
        if self.values.dtype != np.int8:
            raise ShapeError("Tensor3D holds int8 elements")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, c: int, h: int, w: int) -> "Tensor3D":
        return cls(np.zeros((c, h, w), dtype=np.int8))


def _as_array(t) -> np.ndarray:
    return t.values if isinstance(t, Tensor3D) else np.asarray(t)


def conv_accumulate(layer: LayerShape, ifmap, weights) -> np.ndarray:
    """Raw windowed sum-of-products on 32-bit accumulators (no ReLU/pool)."""
    ifmap = _as_array(ifmap)
    weights = np.asarray(weights)
    if ifmap.shape != (layer.c, layer.h, layer.w):
        raise ShapeError(f"ifmap shape {ifmap.shape} != {(layer.c, layer.h, layer.w)}")
    if weights.shape != (layer.k, layer.c, layer.r, layer.s):
        raise ShapeError(
            f"weights shape {weights.shape} != {(layer.k, layer.c, layer.r, layer.s)}"
        )
    return _kernels.conv2d_acc(
        np.ascontiguousarray(ifmap, dtype=np.int8),
        np.ascontiguousarray(weights, dtype=np.int8),
        layer.stride,
        layer.pad,
    )


def requantize(acc: np.ndarray) -> np.ndarray:
    """Scale 32-bit accumulators back to int8 by an arithmetic right shift.

    The shift is the smallest that fits the extreme value, so zero stays
    zero and small activations keep full resolution.
    """
    peak = int(np.abs(acc).max(initial=0))
    shift = 0
    while (peak >> shift) > INT8_MAX:
        shift += 1
    return (acc >> shift).astype(np.int8)


def conv_forward(layer: LayerShape, ifmap, weights) -> np.ndarray:
    """Convolution, ReLU, then max pooling; returns int8 (k, p/pool, q/pool)."""
    acc = conv_accumulate(layer, ifmap, weights)
    np.maximum(acc, 0, out=acc)
    pooled = _kernels.maxpool2d(acc, layer.pool)
    return requantize(pooled)


def generate_weights(net: NetworkSpec, seed: int) -> list[np.ndarray]:
    """Per-layer (k, c, r, s) int8 filters, pruned to the layer's sparsity.

    Pruning zeroes the smallest magnitudes; ties resolve by element order so
    the result is deterministic for a seed.
    """
    out = []
    for idx, layer in enumerate(net.layers):
        sh = layer.shape
        rng = np.random.default_rng([seed, idx, 0xEE17])
        w = rng.integers(-64, 64, size=(sh.k, sh.c, sh.r, sh.s), dtype=np.int8)
        if layer.sparsity > 0:
            flat = w.reshape(-1)
            n_zero = round(layer.sparsity * flat.size)
            order = np.lexsort((np.arange(flat.size), np.abs(flat)))
            flat[order[:n_zero]] = 0
        out.append(w)
    return out


def generate_input(shape: LayerShape, seed: int, policy: str = "natural") -> Tensor3D:
    """Synthetic network input.

    "natural" builds a smooth nonnegative field (compresses like image data),
    "sparse" scatters a few positive spikes on zeros.
    """
    rng = np.random.default_rng([seed, 0x1F])
    c, h, w = shape.c, shape.h, shape.w
    if policy == "natural":
        gh, gw = max(2, h // 8), max(2, w // 8)
        coarse = rng.uniform(0, 60, size=(c, gh, gw))
        reps_h, reps_w = math.ceil(h / gh), math.ceil(w / gw)
        up = np.repeat(np.repeat(coarse, reps_h, axis=1), reps_w, axis=2)[:, :h, :w]
        kern = np.ones(3) / 3.0
        for axis in (1, 2):
            up = np.apply_along_axis(lambda m: np.convolve(m, kern, mode="same"), axis, up)
        return Tensor3D(np.clip(np.round(up), 0, 63).astype(np.int8))
    if policy == "sparse":
        vals = np.zeros((c, h, w), dtype=np.int8)
        n_spikes = max(1, (c * h * w) // 64)
        pos = rng.choice(c * h * w, size=n_spikes, replace=False)
        vals.reshape(-1)[pos] = rng.integers(1, 64, size=n_spikes, dtype=np.int8)
        return Tensor3D(vals)
    raise ConfigError(f"unknown input policy {policy!r}")


# ---------------------------------------------------------------------------
# NSQF numbers


def is_nsqf(n: int) -> bool:
    """True iff some prime square divides n (non-square-free)."""
    if n < 1:
        raise DomainError("is_nsqf needs n >= 1")
    return _kernels.is_nsqf_scalar(int(n))


def nsqf_mask(lo: int, hi: int) -> np.ndarray:
    """uint8 mask over [lo, hi], 1 where the integer is NSQF."""
    if lo < 1:
        raise DomainError("nsqf range needs lo >= 1")
    if lo > hi:
        return np.zeros(0, dtype=np.uint8)
    return _kernels.nsqf_mask(int(lo), int(hi))


def nsqf_in_range(lo: int, hi: int) -> np.ndarray:
    """Ascending NSQF integers in [lo, hi]; empty when lo > hi."""
    if lo > hi:
        return np.zeros(0, dtype=np.int64)
    mask = nsqf_mask(lo, hi)
    return np.flatnonzero(mask).astype(np.int64) + lo


def ifmap_volume(layer: LayerShape) -> int:
    """Input feature map footprint in bytes."""
    return layer.c * layer.h * layer.w * layer.bytes_per_elem


# ---------------------------------------------------------------------------
# network config files


def _layer_from_json(doc: dict) -> Layer:
    shape = LayerShape(
        k=doc["k"],
        c=doc["c"],
        h=doc["h"],
        w=doc["w"],
        r=doc["r"],
        s=doc["s"],
        stride=doc.get("stride", 1),
        pad=doc.get("pad", 0),
        pool=doc.get("pool", 1),
        bytes_per_elem=doc.get("bytes_per_elem", 1),
    )
    til = doc.get("tiling")
    tiling = (
        TilingSpec(tk=til["tk"], tc=til["tc"], th=til["th"], tw=til["tw"])
        if til
        else auto_tile(shape)
    )
    return Layer(shape=shape, tiling=tiling, sparsity=doc.get("sparsity", 0.0))


def network_from_json(doc: dict) -> NetworkSpec:
    try:
        layers = [_layer_from_json(d) for d in doc["layers"]]
    except KeyError as e:
        raise ConfigError(f"layer config missing field {e}") from None
    net = NetworkSpec(
        layers=layers,
        skips=[tuple(p) for p in doc.get("skips", [])],
        name=doc.get("name", ""),
    )
    net.validate()
    return net


def network_to_json(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        sh, ti = layer.shape, layer.tiling
        layers.append(
            {
                "k": sh.k, "c": sh.c, "h": sh.h, "w": sh.w, "r": sh.r, "s": sh.s,
                "stride": sh.stride, "pad": sh.pad, "pool": sh.pool,
                "bytes_per_elem": sh.bytes_per_elem,
                "sparsity": layer.sparsity,
                "tiling": {"tk": ti.tk, "tc": ti.tc, "th": ti.th, "tw": ti.tw},
            }
        )
    return {"name": net.name, "layers": layers, "skips": [list(p) for p in net.skips]}


def load_network(name_or_path: str) -> NetworkSpec:
    """Load a network config: a bundled name ("vgg16-32", "toy-sparse",
    "vgg16-head") or a path to a JSON document."""
    bundled = resources.files("neuroplug.configs")
    candidate = bundled / f"{name_or_path}.json"
    if candidate.is_file():
        doc = json.loads(candidate.read_text())
    else:
        try:
            with open(name_or_path) as f:
                doc = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot load network config {name_or_path!r}: {e}") from None
    return network_from_json(doc)
