"""Attack generations against the simulated traces.

* ss_attack       - statistical: drops writes that are never read back and
                    aggregates min/mean volumes over repeated runs.
* kk_attack       - Kerckhoff: subtracts insider-leaked hardwired constants
                    from the statistical estimates.
* si_attack       - side information: strips fake read-after-write updates
                    by spotting unchanged values, prunes volume candidates
                    to NSQF integers.
* huffduff_attack - crafted impulse inputs; the boundary effect in nonzero
                    write volume leaks the filter width on sparse traces.
* reverse_engg_attack - segments layers by RAW structure and solves the
                    volume equations for (C, H, W, K, R, S) by exhaustive
                    integer enumeration.

All attacks are read-only over immutable traces.  The address map is
treated as public NPU design knowledge; only key material is secret.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import mellin, tracegen
from .errors import DomainError, InapplicableError
from .mellin import GridPdf
from .model import LayerShape, Tensor3D, nsqf_in_range
from .tracegen import FMAP_REGION, OP_READ, OP_WRITE, REGION_SHIFT, Trace

V_LO_DEFAULT = 1.5  # adversary's compression-ratio band: 1.5x .. 40x
V_HI_DEFAULT = 40.0


@dataclass
class LayerEstimate:
    layer: int
    volume_min: float | None = None
    volume_mean: float | None = None
    write_count: int | None = None
    write_volume: int | None = None
    candidates: list[int] | None = None
    evidence: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"layer": self.layer}
        for name in ("volume_min", "volume_mean", "write_count", "write_volume"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        if self.candidates is not None:
            out["candidates"] = [int(c) for c in self.candidates[:64]]
            out["candidate_count"] = len(self.candidates)
        out["evidence"] = self.evidence
        return out


@dataclass
class AttackReport:
    kind: str
    layers: list[LayerEstimate]
    notes: list[str] = field(default_factory=list)
    runs_used: int = 0
    extra: dict = field(default_factory=dict)

    def layer(self, i: int) -> LayerEstimate:
        for est in self.layers:
            if est.layer == i:
                return est
        raise KeyError(i)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "runs_used": self.runs_used,
            "layers": [l.to_json() for l in self.layers],
            "notes": self.notes,
            "extra": self.extra,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


# ---------------------------------------------------------------------------
# interval helpers


def _merged_read_intervals(arr) -> tuple[np.ndarray, np.ndarray]:
    reads = arr[arr["op"] == OP_READ]
    if len(reads) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    starts = reads["addr"].astype(np.int64)
    ends = starts + reads["size"].astype(np.int64)
    order = np.argsort(starts, kind="stable")
    starts, ends = starts[order], ends[order]
    m_starts = [int(starts[0])]
    m_ends = [int(ends[0])]
    for s, e in zip(starts[1:], ends[1:]):
        if s <= m_ends[-1]:
            m_ends[-1] = max(m_ends[-1], int(e))
        else:
            m_starts.append(int(s))
            m_ends.append(int(e))
    return np.array(m_starts, dtype=np.int64), np.array(m_ends, dtype=np.int64)


def _writes_overlapping_reads(arr) -> np.ndarray:
    """Boolean mask (over write rows) of writes later read back."""
    m_starts, m_ends = _merged_read_intervals(arr)
    writes = arr[arr["op"] == OP_WRITE]
    if m_starts.size == 0 or len(writes) == 0:
        return np.zeros(len(writes), dtype=bool)
    a = writes["addr"].astype(np.int64)
    e = a + writes["size"].astype(np.int64)
    idx = np.searchsorted(m_starts, e, side="left") - 1
    ok = idx >= 0
    covered = np.zeros(len(writes), dtype=bool)
    covered[ok] = m_ends[idx[ok]] > a[ok]
    return covered


def _fmap_read_stats(arr, tensor_idx: int) -> tuple[int, int]:
    """(total read volume, per-address count mode) for one fmap region."""
    mask = (arr["op"] == OP_READ) & ((arr["addr"] >> REGION_SHIFT) == FMAP_REGION + tensor_idx)
    if not mask.any():
        return 0, 1
    vol = int(arr["size"][mask].sum())
    _, counts = np.unique(arr["addr"][mask], return_counts=True)
    mode = int(np.bincount(counts).argmax())
    return vol, max(1, mode)


# ---------------------------------------------------------------------------
# generation 1: statistical


def ss_attack(traces, n_layers: int | None = None) -> AttackReport:
    """Filter unread writes and aggregate per-layer volumes over runs.

    Write events never read again carry no data the network consumed, so
    they are dropped.  Volumes are normalized by the per-address read-count
    mode to undo block re-reads, then the min and mean over runs serve as
    the noise filter.
    """
    vols: dict[int, list[float]] = {}
    write_counts: dict[int, list[int]] = {}
    write_vols: dict[int, list[int]] = {}
    runs = 0
    for trace in traces:
        arr = trace.arr
        runs += 1
        covered = _writes_overlapping_reads(arr)
        writes = arr[arr["op"] == OP_WRITE]
        w_regions = writes["addr"] >> REGION_SHIFT
        max_fmap = 0
        regions = np.unique(arr["addr"] >> REGION_SHIFT)
        for rid in regions:
            kind, idx = tracegen.region_of(int(rid) << REGION_SHIFT)
            if kind == "fmap":
                max_fmap = max(max_fmap, idx)
        layer_count = n_layers if n_layers is not None else max_fmap
        for i in range(layer_count):
            vol, mode = _fmap_read_stats(arr, i)
            vols.setdefault(i, []).append(vol / mode)
            out_mask = (w_regions == FMAP_REGION + i + 1) & covered
            write_counts.setdefault(i, []).append(int(out_mask.sum()))
            write_vols.setdefault(i, []).append(int(writes["size"][out_mask].sum()))
    if runs == 0:
        raise DomainError("ss attack needs at least one trace")
    layers = []
    for i in sorted(vols):
        layers.append(
            LayerEstimate(
                layer=i,
                volume_min=float(np.min(vols[i])),
                volume_mean=float(np.mean(vols[i])),
                write_count=int(np.min(write_counts[i])),
                write_volume=int(np.min(write_vols[i])),
                evidence={"statistic": "min/mean over runs, unread writes dropped"},
            )
        )
    return AttackReport(kind="ss", layers=layers, runs_used=runs)


# ---------------------------------------------------------------------------
# generation 2: Kerckhoff


def kk_attack(report: AttackReport, leaked_constants: dict) -> AttackReport:
    """Subtract insider-leaked hardwired constants from the estimates.

    Understands a hardwired additive mean with jitter bounds (subtracts the
    attainable minimum from the min-filtered volume) and the public bin
    geometry (subtracts the worst-case table overhead per observed bin).
    Anything key-resident stays untouched and is flagged.
    """
    layers = []
    notes = list(report.notes)
    const = leaked_constants.get("const_mean")
    jit_lo = leaked_constants.get("jitter_lo", 0)
    bin_size = leaked_constants.get("bin_size")
    kappa = leaked_constants.get("kappa", 8)
    entry = leaked_constants.get("table_entry_size", 8)
    if not leaked_constants:
        notes.append("empty leak table; estimates unchanged")
    for est in report.layers:
        vol = est.volume_min
        evidence = dict(est.evidence)
        if vol is not None:
            if const is not None:
                vol = vol - (const + jit_lo)
                evidence["kk"] = f"subtracted hardwired floor {const + jit_lo}"
            elif bin_size is not None and vol > 0:
                n_bins = int(vol // bin_size)
                vol = vol - n_bins * (2 + kappa * entry)
                evidence["kk"] = "subtracted hardwired table bytes; noise floor key-resident"
            else:
                evidence["kk"] = "no applicable leaked constant; key-resident parameters remain"
        layers.append(
            LayerEstimate(
                layer=est.layer,
                volume_min=vol,
                volume_mean=est.volume_mean,
                write_count=est.write_count,
                write_volume=est.write_volume,
                candidates=est.candidates,
                evidence=evidence,
            )
        )
    return AttackReport(kind="ss+kk", layers=layers, notes=notes, runs_used=report.runs_used)


# ---------------------------------------------------------------------------
# generation 3: side information


def si_attack(
    traces,
    value_observability: bool = True,
    prior: dict[int, tuple[int, int]] | tuple[int, int] | None = None,
    base_report: AttackReport | None = None,
) -> AttackReport:
    """Strip fake updates by value equality; prune candidates to NSQF.

    A write whose content hash equals the previous write to the same
    address updated nothing: real networks essentially never rewrite a
    feature map byte-identically, so those writes are dropped as planted.
    """
    layers_map: dict[int, LayerEstimate] = {}
    if base_report is not None:
        for est in base_report.layers:
            layers_map[est.layer] = est
    removed_total = 0
    runs = 0
    corrected_counts: dict[int, list[int]] = {}
    corrected_vols: dict[int, list[int]] = {}
    removed_per_tensor: dict[int, int] = {}
    for trace in traces:
        runs += 1
        arr = trace.arr
        fake = np.zeros(len(arr), dtype=bool)
        if value_observability:
            last_digest: dict[int, int] = {}
            for idx in range(len(arr)):
                if arr["op"][idx] != OP_WRITE:
                    continue
                a = int(arr["addr"][idx])
                d = int(arr["digest"][idx])
                if last_digest.get(a) == d and d != 0:
                    fake[idx] = True
                    kind, t_idx = tracegen.region_of(a)
                    if kind == "fmap":
                        removed_per_tensor[t_idx] = removed_per_tensor.get(t_idx, 0) + 1
                last_digest[a] = d
        removed_total += int(fake.sum())
        covered_arr = arr[~fake]
        covered = _writes_overlapping_reads(covered_arr)
        writes = covered_arr[covered_arr["op"] == OP_WRITE]
        w_regions = writes["addr"] >> REGION_SHIFT
        for i in range(64):
            mask = (w_regions == FMAP_REGION + i + 1) & covered
            if not mask.any():
                continue
            uniq, first_idx = np.unique(writes["addr"][mask], return_index=True)
            corrected_counts.setdefault(i, []).append(int(uniq.size))
            corrected_vols.setdefault(i, []).append(int(writes["size"][mask][first_idx].sum()))
    layers = []
    for i in sorted(set(corrected_counts) | set(layers_map)):
        est = layers_map.get(i, LayerEstimate(layer=i))
        if i in corrected_counts:
            est.write_count = int(np.min(corrected_counts[i]))
            est.write_volume = int(np.min(corrected_vols[i]))
            est.evidence["si"] = "unchanged-value rewrites removed"
        # where fakes were stripped, the cleaned write volume of the producing
        # layer is the trustworthy input volume of the consumer
        if removed_per_tensor.get(i, 0) > 0 and (i - 1) in corrected_vols:
            est.volume_min = float(np.min(corrected_vols[i - 1]))
            est.volume_mean = float(np.mean(corrected_vols[i - 1]))
            est.evidence["si_volume"] = "input volume from cleaned upstream writes"
        lo_hi = prior.get(i) if isinstance(prior, dict) else prior
        if lo_hi is not None:
            cands = nsqf_in_range(int(lo_hi[0]), int(lo_hi[1]))
            est.candidates = cands.tolist()
            est.evidence["nsqf_range"] = [int(lo_hi[0]), int(lo_hi[1])]
        layers.append(est)
    return AttackReport(
        kind="si",
        layers=layers,
        runs_used=runs,
        extra={"fake_writes_removed": removed_total},
    )


def sskksi_pipeline(traces: list[Trace], leaked_constants: dict | None = None,
                    value_observability: bool = True) -> AttackReport:
    """The full three-generation pipeline in order."""
    rep = ss_attack(traces)
    rep = kk_attack(rep, leaked_constants or {})
    rep = si_attack(traces, value_observability, base_report=rep)
    rep.kind = "ss+kk+si"
    return rep


# ---------------------------------------------------------------------------
# candidate ranking under the compression-aware model


def smart_rank_for_layer(
    y_obs: float,
    x_r: int,
    v_lo: float = V_LO_DEFAULT,
    v_hi: float = V_HI_DEFAULT,
    slack_fraction: float = 0.875,
) -> mellin.RankResult:
    """Rank of the true volume in the adversary's NSQF-restricted prediction.

    The additive prior spans [1, slack_fraction * Y] (the attacker knows at
    least some of each observation is data); the compression prior spans
    the public 1.5x..40x band.
    """
    alpha_hi = max(2.0, slack_fraction * y_obs)
    alpha_prior = GridPdf.uniform(1.0, alpha_hi, 1024)
    beta_prior = GridPdf.uniform(1.0 / v_hi, 1.0 / v_lo, 1024)
    h = mellin.predict_X(y_obs, alpha_prior, beta_prior)
    lo = max(2, int((y_obs - alpha_hi) * v_lo))
    hi = int(y_obs * v_hi)
    sm = mellin.smart_search_space(h, lo, hi)
    r = mellin.rank(sm, x_r)
    return mellin.RankResult(layer=-1, x_r=x_r, rank=r, n_candidates=sm.values.size)


# ---------------------------------------------------------------------------
# crafted inputs


@dataclass
class CraftedInputSet:
    policy: str
    tensors: list[Tensor3D]


def craft_inputs(
    policy: str,
    shape: LayerShape,
    count: int,
    seed: int = 0,
    base: Tensor3D | None = None,
    amplitude: int = 1,
) -> CraftedInputSet:
    """Attack inputs: impulse sweeps or speckled variants of a base input."""
    if count < 1:
        raise DomainError("count must be >= 1")
    tensors = []
    if policy == "impulse-row":
        if count > shape.w:
            raise DomainError(f"impulse-row supports at most {shape.w} positions")
        for k in range(count):
            vals = np.zeros((shape.c, shape.h, shape.w), dtype=np.int8)
            vals[0, 0, k] = 1
            tensors.append(Tensor3D(vals))
    elif policy == "impulse-col":
        if count > shape.h:
            raise DomainError(f"impulse-col supports at most {shape.h} positions")
        for k in range(count):
            vals = np.zeros((shape.c, shape.h, shape.w), dtype=np.int8)
            vals[0, k, 0] = 1
            tensors.append(Tensor3D(vals))
    elif policy == "speckle":
        if base is None:
            raise DomainError("speckle needs a base input")
        rng = np.random.default_rng([seed, 0x5E])
        for _ in range(count):
            vals = base.values.copy()
            if amplitude > 0:
                nz = np.flatnonzero(vals.reshape(-1))
                flat = vals.reshape(-1)
                delta = rng.integers(-amplitude, amplitude + 1, size=nz.size).astype(np.int8)
                bumped = flat[nz].astype(np.int16) + delta
                # keep sign and nonzero-ness so the sparse footprint is stable
                bumped = np.clip(bumped, 1, 63).astype(np.int8)
                flat[nz] = bumped
            tensors.append(Tensor3D(vals))
    else:
        raise DomainError(f"unknown crafted-input policy {policy!r}")
    return CraftedInputSet(policy=policy, tensors=tensors)


# ---------------------------------------------------------------------------
# case study 1: boundary effect on sparse accelerators


def _layer1_write_volume(trace: Trace) -> int:
    arr = trace.arr
    mask = (arr["op"] == OP_WRITE) & ((arr["addr"] >> REGION_SHIFT) == FMAP_REGION + 1)
    return int(arr["size"][mask].sum())


def _plateau_half_width(series: np.ndarray) -> int:
    mid = series[len(series) // 2]
    for k, v in enumerate(series):
        if v == mid:
            return k
    return 0


def huffduff_attack(scenario: tracegen.Scenario, max_filter: int = 9) -> AttackReport:
    """Impulse-position sweep; the rise to the plateau reveals the filter.

    Sweeping a single 1 along the first row, outputs shrink while the
    filter window still hangs over the edge; the first position matching
    the mid-row volume marks half the filter width.  A column sweep gives
    the height the same way.
    """
    net = scenario.net
    shape0 = net.layers[0].shape
    if scenario.cm == "none" and not scenario.sparse:
        raise InapplicableError("boundary-effect volumes need a sparse accelerator trace")

    def volume_for(inp: Tensor3D, run_index: int) -> int:
        if scenario.cm == "neuroplug":
            run = tracegen.neuroplug_trace(
                net, inp, scenario.key, run_index=run_index, model_seed=scenario.seed
            )
            return run.bins_of(0, "ofmap") * scenario.key.bin_cfg.bin_size
        tr = tracegen.baseline_trace(net, inp, seed=scenario.seed, sparse=True)
        return _layer1_write_volume(tr)

    row_sweep = craft_inputs("impulse-row", shape0, shape0.w).tensors
    col_sweep = craft_inputs("impulse-col", shape0, shape0.h).tensors
    row_series = np.array([volume_for(inp, i) for i, inp in enumerate(row_sweep)])
    col_series = np.array([volume_for(inp, i) for i, inp in enumerate(col_sweep)])

    if scenario.cm == "neuroplug":
        # compare against noise-only dispersion at a fixed input
        fixed = [volume_for(row_sweep[0], 1000 + i) for i in range(len(row_sweep))]
        noise_var = float(np.var(fixed))
        series_var = float(np.var(row_series))
        verdict = "failed: series variance within noise" if series_var <= 4 * max(noise_var, 1.0) else "signal"
        est = LayerEstimate(
            layer=0,
            evidence={
                "series_variance": series_var,
                "noise_variance": noise_var,
                "verdict": verdict,
            },
        )
        return AttackReport(
            kind="huffduff",
            layers=[est],
            notes=[verdict],
            runs_used=len(row_series) + len(col_series) + len(fixed),
            extra={"row_series": row_series.tolist(), "s_hat": None, "r_hat": None},
        )

    s_hat = 2 * _plateau_half_width(row_series) + 1
    r_hat = 2 * _plateau_half_width(col_series) + 1
    est = LayerEstimate(layer=0, evidence={"s_hat": s_hat, "r_hat": r_hat})
    return AttackReport(
        kind="huffduff",
        layers=[est],
        runs_used=len(row_series) + len(col_series),
        extra={"s_hat": s_hat, "r_hat": r_hat, "row_series": row_series.tolist()},
    )


# ---------------------------------------------------------------------------
# case study 2: constraint equations from one trace


def _segment_trace(arr) -> list[np.ndarray]:
    """Split on the first read of data written in the current segment."""
    boundaries = [0]
    w_starts: list[int] = []
    w_ends: list[int] = []
    for idx in range(len(arr)):
        a = int(arr["addr"][idx])
        size = int(arr["size"][idx])
        if arr["op"][idx] == OP_WRITE:
            w_starts.append(a)
            w_ends.append(a + size)
        else:
            if w_starts:
                ws = np.array(w_starts)
                we = np.array(w_ends)
                if np.any((ws < a + size) & (we > a)):
                    boundaries.append(idx)
                    w_starts, w_ends = [], []
    boundaries.append(len(arr))
    segments = [np.arange(boundaries[i], boundaries[i + 1]) for i in range(len(boundaries) - 1)]
    segments = [s for s in segments if s.size]
    # a block's first weight fetch can precede the boundary read; move
    # trailing reads of a region that dominates the next segment
    for i in range(len(segments) - 1):
        cur, nxt = segments[i], segments[i + 1]
        nxt_regions = set((arr["addr"][nxt] >> REGION_SHIFT).tolist())
        j = cur.size - 1
        moved = []
        while j >= 0:
            idx = cur[j]
            rid = int(arr["addr"][idx]) >> REGION_SHIFT
            if arr["op"][idx] == OP_READ and rid >= tracegen.WEIGHT_REGION and rid in nxt_regions:
                moved.append(idx)
                j -= 1
            else:
                break
        if moved:
            segments[i] = cur[: j + 1]
            segments[i + 1] = np.concatenate([np.array(sorted(moved)), nxt])
    return segments


def _unique_volume(rows) -> int:
    if len(rows) == 0:
        return 0
    _, first_idx = np.unique(rows["addr"], return_index=True)
    return int(rows["size"][first_idx].sum())


def reverse_engg_attack(
    trace: Trace,
    bounds: dict | None = None,
    bytes_per_elem: int = 1,
    uncertain: bool = False,
    v_band: tuple[float, float] = (V_LO_DEFAULT, V_HI_DEFAULT),
) -> AttackReport:
    """Solve volume constraint equations per segmented layer.

    Assumes square maps with stride-1 same-size outputs (the common conv
    shape).  On exact traces the candidate set collapses to the true
    tuple; with `uncertain` the volumes become intervals under the public
    compression band and the set explodes.
    """
    bounds = bounds or {"c": 512, "h": 512, "k": 512, "rs": 16}
    arr = trace.arr
    segments = _segment_trace(arr)
    notes = []
    if len(segments) <= 1:
        notes.append("unsegmentable trace; enumerating over whole-trace volumes")
    layers = []
    prev_writes = None
    for seg_i, seg in enumerate(segments):
        rows = arr[seg]
        reads = rows[rows["op"] == OP_READ]
        writes = rows[rows["op"] == OP_WRITE]
        matched = np.zeros(len(reads), dtype=bool)
        if prev_writes is not None and len(prev_writes):
            ws = prev_writes["addr"].astype(np.int64)
            we = ws + prev_writes["size"].astype(np.int64)
            order = np.argsort(ws)
            ws, we = ws[order], we[order]
            a = reads["addr"].astype(np.int64)
            e = a + reads["size"].astype(np.int64)
            idx = np.searchsorted(ws, e, side="left") - 1
            ok = idx >= 0
            matched[ok] = we[idx[ok]] > a[ok]
        fmap_in = reads[matched]
        other = reads[~matched]
        if seg_i == 0 and len(other):
            # two unmatched clusters: the input map and the filters; the
            # input footprint dominates for convolution layers
            rid = other["addr"] >> REGION_SHIFT
            vols = {}
            for r in np.unique(rid):
                vols[int(r)] = _unique_volume(other[rid == r])
            input_rid = max(vols, key=vols.get)
            fmap_in = other[rid == input_rid]
            other = other[rid != input_rid]
        vol_in = _unique_volume(fmap_in)
        vol_w = _unique_volume(other)
        vol_out = _unique_volume(writes)
        cands = _enumerate_candidates(
            vol_in, vol_w, vol_out, bounds, bytes_per_elem, uncertain, v_band
        )
        layers.append(
            LayerEstimate(
                layer=seg_i,
                volume_min=float(vol_in),
                write_volume=vol_out,
                candidates=[c[0] * 10**9 + c[1] * 10**6 + c[2] * 10**3 + c[3] for c in cands[:4096]],
                evidence={
                    "segments": len(segments),
                    "vol_in": vol_in,
                    "vol_weights": vol_w,
                    "vol_out": vol_out,
                    "candidate_count": len(cands),
                    "tuples": cands[:16],
                },
            )
        )
        prev_writes = writes
    return AttackReport(
        kind="reverse-engg",
        layers=layers,
        notes=notes,
        runs_used=1,
        extra={"segments": len(segments)},
    )


def _enumerate_candidates(vol_in, vol_w, vol_out, bounds, b, uncertain, v_band):
    """(C, H, K, RS) tuples consistent with the observed volumes."""
    out = []
    if uncertain:
        # noise only inflates, compression only shrinks: X in [Y/v_hi, Y]
        lo_in, hi_in = max(1, int(vol_in / v_band[1])), int(vol_in)
        lo_out, hi_out = max(1, int(vol_out / v_band[1])), int(vol_out)
        lo_w, hi_w = max(1, int(vol_w / v_band[1])), int(vol_w)
    for h in range(1, bounds["h"] + 1):
        h2b = h * h * b
        if not uncertain:
            if vol_in % h2b or vol_out % h2b:
                continue
            c = vol_in // h2b
            k = vol_out // h2b
            if not (1 <= c <= bounds["c"] and 1 <= k <= bounds["k"]):
                continue
            rs_vol = vol_w // (k * c * b) if k * c else 0
            if rs_vol == 0 or vol_w % (k * c * b):
                continue
            if rs_vol > bounds["rs"] * bounds["rs"]:
                continue
            out.append((int(c), int(h), int(k), int(rs_vol)))
        else:
            c_lo = max(1, -(-lo_in // h2b))
            c_hi = min(bounds["c"], hi_in // h2b)
            k_lo = max(1, -(-lo_out // h2b))
            k_hi = min(bounds["k"], hi_out // h2b)
            if c_lo > c_hi or k_lo > k_hi:
                continue
            for c in range(c_lo, c_hi + 1):
                for k in range(k_lo, k_hi + 1):
                    rs_lo = max(1, -(-lo_w // (k * c * b)))
                    rs_hi = min(bounds["rs"] * bounds["rs"], hi_w // (k * c * b))
                    for rs in range(rs_lo, rs_hi + 1):
                        out.append((c, h, k, rs))
                        if len(out) >= 2_000_000:
                            return out
    return out


# ---------------------------------------------------------------------------
# verdicts


def verdict_volumes(report: AttackReport, truth: dict, exclude_last: bool = True) -> dict:
    """Compare point estimates against out-of-band ground truth."""
    per_layer = []
    n = len(truth["layers"])
    for row in truth["layers"]:
        i = row["layer"]
        if exclude_last and i == n - 1:
            continue
        try:
            est = report.layer(i)
        except KeyError:
            continue
        entry = {"layer": i}
        if est.volume_min is not None:
            entry["volume_exact"] = int(round(est.volume_min)) == row["ifmap_volume"]
            entry["volume_rel_error"] = abs(est.volume_min - row["ifmap_volume"]) / row["ifmap_volume"]
        if est.write_count is not None:
            entry["write_count_exact"] = est.write_count == row["ofmap_write_tiles"]
        per_layer.append(entry)
    broken = all(
        e.get("volume_exact", True) and e.get("write_count_exact", True) for e in per_layer
    )
    return {"per_layer": per_layer, "broken": broken}
