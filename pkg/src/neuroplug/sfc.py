"""1-D space-filling-curve orders over a layer's 3-D tile space.

An ifmap is walked as deep tiles: row-major over the (row, col) grid with
the channel groups of one position kept adjacent.  Filters are walked as
kernels grouped by output map.  Execution planning decides how the walk is
chopped when weights and/or inputs overflow the on-chip capacity (cases I,
II, III) and how weight re-reads are hidden by unrolling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PlanningError
from .model import LayerShape, TilingSpec

CASE_ALL_FIT = "AllFit"
CASE_I = "I"
CASE_II = "II"
CASE_III = "III"


@dataclass(frozen=True)
class DeepTileId:
    layer: int
    row: int
    col: int
    chan_lo: int
    chan_hi: int

    def key(self):
        return (self.row, self.col, self.chan_lo, self.chan_hi)


@dataclass(frozen=True)
class SfcOrder:
    kind: str  # ifmap | filter | ofmap | fused-filter | halo
    sequence: tuple

    def __len__(self):
        return len(self.sequence)

    def to_json(self) -> dict:
        return {"kind": self.kind, "sequence": [list(e) for e in self.sequence]}


def grid_dims(shape_h: int, shape_w: int, channels: int, th: int, tw: int, tc: int):
    """(n_rows, n_cols, n_chan_groups) with ceil division for remainders."""
    return (math.ceil(shape_h / th), math.ceil(shape_w / tw), math.ceil(channels / tc))


def ifmap_grid(layer: LayerShape, tiling: TilingSpec):
    return grid_dims(layer.h, layer.w, layer.c, tiling.th, tiling.tw, tiling.tc)


def ofmap_tile_dims(layer: LayerShape, tiling: TilingSpec):
    """Spatial tile dims of the pooled output walk."""
    th_out = max(1, tiling.th // layer.pool)
    tw_out = max(1, tiling.tw // layer.pool)
    return th_out, tw_out


def ofmap_grid(layer: LayerShape, tiling: TilingSpec):
    th_out, tw_out = ofmap_tile_dims(layer, tiling)
    return grid_dims(layer.p_out, layer.q_out, layer.k, th_out, tw_out, tiling.tk)


def _deep_tile_walk(layer_idx, n_rows, n_cols, n_groups, tc, channels):
    seq = []
    for row in range(n_rows):
        for col in range(n_cols):
            for g in range(n_groups):
                lo = g * tc
                seq.append(DeepTileId(layer_idx, row, col, lo, min(channels, lo + tc)))
    return tuple(seq)


def ifmap_sfc(layer: LayerShape, tiling: TilingSpec, layer_idx: int = 0) -> SfcOrder:
    """Deep-tile read order: rows outer, cols inner, channel groups innermost."""
    n_rows, n_cols, n_groups = ifmap_grid(layer, tiling)
    return SfcOrder("ifmap", _deep_tile_walk(layer_idx, n_rows, n_cols, n_groups, tiling.tc, layer.c))


def ofmap_sfc(layer: LayerShape, tiling: TilingSpec, layer_idx: int = 0) -> SfcOrder:
    """Write order of the pooled output; same walk shape as an ifmap read."""
    n_rows, n_cols, n_groups = ofmap_grid(layer, tiling)
    return SfcOrder("ofmap", _deep_tile_walk(layer_idx, n_rows, n_cols, n_groups, tiling.tk, layer.k))


def filter_sfc(layer: LayerShape) -> SfcOrder:
    """All C kernels of output map 0, then of output map 1, and so on."""
    return SfcOrder("filter", tuple((k, c) for k in range(layer.k) for c in range(layer.c)))


def fused_filter_sfc(layer_a: LayerShape, k_hi: int, layer_b: LayerShape) -> SfcOrder:
    """Kernels for layer A's partition [0, k_hi) followed by all of layer B's."""
    seq = [(0, k, c) for k in range(k_hi) for c in range(layer_a.c)]
    seq += [(1, k, c) for k in range(layer_b.k) for c in range(layer_b.c)]
    return SfcOrder("fused-filter", tuple(seq))


# ---------------------------------------------------------------------------
# execution planning


@dataclass
class ExecutionPlan:
    case: str
    ofmap_partition: list[int]
    ifmap_bin_groups: list[int]
    tau: int
    eta: int
    partition_seed: int
    group_bin_capacity: int = 0

    def validate(self, k_total: int) -> None:
        assert sum(self.ofmap_partition) == k_total
        assert self.tau >= 1
        assert 1 <= self.eta <= self.tau

    def unrolled_weight_order(self) -> list[tuple[int, int]]:
        """(part_idx, stored_copy_idx) stream of shape W1 W2 ... repeated tau times.

        Reads cycle through the eta stored copies of the partitioned curve.
        """
        n = len(self.ofmap_partition)
        return [
            (part, pass_idx % self.eta)
            for pass_idx in range(self.tau)
            for part in range(n)
        ]

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "partition": self.ofmap_partition,
            "groups": self.ifmap_bin_groups,
            "tau": self.tau,
            "eta": self.eta,
            "partition_seed": self.partition_seed,
        }


def _noise_int(rng: np.random.Generator, spread: float) -> int:
    """Integer mode of the additive-noise sampler: |N(0, s)| with uniform-drawn variance."""
    sigma = math.sqrt(rng.uniform(0.0, spread * spread))
    return int(min(abs(rng.normal(0.0, sigma)) if sigma > 0 else 0.0, 3 * spread))


def _random_composition(
    rng: np.random.Generator, total: int, parts: int, part_cap: int | None = None
) -> list[int]:
    """Uniform composition of total into parts >= 1, optionally capped per part."""
    if parts <= 1:
        return [total]
    for _ in range(16):
        cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
        edges = np.concatenate(([0], cuts, [total]))
        comp = np.diff(edges).astype(int).tolist()
        if part_cap is None or max(comp) <= part_cap:
            return comp
    # even split always satisfies the cap whenever parts * cap >= total
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def weight_bytes(layer: LayerShape) -> int:
    return layer.k * layer.c * layer.r * layer.s * layer.bytes_per_elem


def ifmap_bytes(layer: LayerShape) -> int:
    return layer.c * layer.h * layer.w * layer.bytes_per_elem


def deep_tile_bytes(layer: LayerShape, tiling: TilingSpec) -> int:
    return tiling.tc * tiling.th * tiling.tw * layer.bytes_per_elem


def plan_execution(
    layer: LayerShape,
    tiling: TilingSpec,
    npu_capacity_bytes: int,
    rng: np.random.Generator,
    bin_size: int = 61440,
) -> ExecutionPlan:
    """Choose the capacity case and randomized partitions for one layer.

    The ofmap partition count and the unroll factor are random variables
    drawn from the same sampler family as the bin noise, so the plan is a
    per-run secret.
    """
    w_bytes = weight_bytes(layer)
    i_bytes = ifmap_bytes(layer)
    tile_bytes = deep_tile_bytes(layer, tiling)
    if npu_capacity_bytes < max(tile_bytes, bin_size):
        raise PlanningError(
            f"capacity {npu_capacity_bytes} below one deep tile ({tile_bytes}) or bin ({bin_size})"
        )
    seed = int(rng.integers(0, 2**31 - 1))
    est_ifmap_bins = max(1, math.ceil(i_bytes / bin_size))

    kernel_bytes = layer.c * layer.r * layer.s * layer.bytes_per_elem
    weights_fit = w_bytes + tile_bytes <= npu_capacity_bytes
    both_fit = w_bytes + i_bytes <= npu_capacity_bytes
    ifmap_fits = i_bytes + tile_bytes <= npu_capacity_bytes

    if both_fit:
        return ExecutionPlan(CASE_ALL_FIT, [layer.k], [est_ifmap_bins], 1, 1, seed,
                             group_bin_capacity=est_ifmap_bins)

    if not weights_fit and ifmap_fits:
        # case I: stream the weights in n randomly sized chunks of output maps
        headroom = npu_capacity_bytes - i_bytes
        k_cap = max(1, headroom // kernel_bytes)
        n_min = max(2, math.ceil(layer.k / k_cap))
        n = min(layer.k, n_min + _noise_int(rng, 1.5))
        partition = _random_composition(rng, layer.k, n, part_cap=k_cap)
        return ExecutionPlan(CASE_I, partition, [est_ifmap_bins], 1, 1, seed,
                             group_bin_capacity=est_ifmap_bins)

    if weights_fit:
        # case II: chop the ifmap walk into groups of bins that fit beside the weights
        g_max = max(1, (npu_capacity_bytes - w_bytes) // bin_size)
        groups = _chop(est_ifmap_bins, g_max)
        return ExecutionPlan(CASE_II, [layer.k], groups, 1, 1, seed, group_bin_capacity=g_max)

    # case III: both overflow; weights streamed per ifmap group, unrolled
    half = npu_capacity_bytes // 2
    k_cap = max(1, half // kernel_bytes)
    n_min = max(2, math.ceil(layer.k / k_cap))
    n = min(layer.k, n_min + _noise_int(rng, 1.5))
    partition = _random_composition(rng, layer.k, n, part_cap=k_cap)
    g_max = max(1, half // bin_size)
    groups = _chop(est_ifmap_bins, g_max)
    tau = len(groups)
    eta = 1 + _noise_int(rng, 1.0)
    eta = max(1, min(eta, tau))
    return ExecutionPlan(CASE_III, partition, groups, tau, eta, seed, group_bin_capacity=g_max)


def _chop(total: int, chunk: int) -> list[int]:
    out = [chunk] * (total // chunk)
    if total % chunk:
        out.append(total % chunk)
    return out or [0]


# ---------------------------------------------------------------------------
# halo pixels


@dataclass(frozen=True)
class HaloTransfer:
    dest: tuple[int, int]
    source: tuple[int, int]
    strip_rows: int
    strip_cols: int


@dataclass
class HaloPlan:
    transfers: list[HaloTransfer] = field(default_factory=list)
    overflow: SfcOrder | None = None

    @property
    def empty(self) -> bool:
        return not self.transfers


def halo_plan(layer: LayerShape, tiling: TilingSpec, onchip_halo_budget: int) -> HaloPlan:
    """Plan boundary-pixel movement between neighbouring tiles.

    Tiles source their halos from the western neighbour (same row, already
    read) and the northern neighbour (previous row).  If holding one row's
    worth of south-facing halo pixels exceeds the budget, the inter-row
    strips are spilled to a halo curve written during row i and read back
    in the same order during row i+1.
    """
    if layer.r <= 1 and layer.s <= 1:
        return HaloPlan()
    hw_w = (layer.s - 1) // 2  # columns needed from the west
    hw_n = (layer.r - 1) // 2  # rows needed from the north
    n_rows, n_cols, _ = ifmap_grid(layer, tiling)
    transfers = []
    for row in range(n_rows):
        for col in range(n_cols):
            if col > 0 and hw_w > 0:
                transfers.append(HaloTransfer((row, col), (row, col - 1), tiling.th, hw_w))
            if row > 0 and hw_n > 0:
                transfers.append(HaloTransfer((row, col), (row - 1, col), hw_n, tiling.tw))
    row_south_bytes = hw_n * layer.w * tiling.tc * layer.bytes_per_elem
    overflow = None
    if hw_n > 0 and n_rows > 1 and row_south_bytes > onchip_halo_budget:
        seq = tuple((row, col) for row in range(n_rows - 1) for col in range(n_cols))
        overflow = SfcOrder("halo", seq)
    return HaloPlan(transfers=transfers, overflow=overflow)


def default_halo_budget(layer: LayerShape, tiling: TilingSpec) -> int:
    """Two tile rows of pixels."""
    return 2 * tiling.th * layer.w * tiling.tc * layer.bytes_per_elem
