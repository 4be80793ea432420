"""End-to-end layer-by-layer pruning of a manifest-described toy model.

A small pre-norm residual transformer (causal single-pass attention, gated
FFN) stands in for full-scale models: it is large enough to exhibit error
accumulation across layers yet small enough for every numerical claim to
be checked against exact oracles. Calibration activations propagate
through the already-pruned prefix by default, so each layer's Hessian sees
the features it will actually receive after compression.
"""

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calib import HessianAccumulator
from .config import DEFAULT_DAMPING
from .errors import NotSpdError, ObslimError
from .ffn_pruner import GroupSchedule, prune_channels
from .head_pruner import REFRESH_MODES, HeadLayout, prune_heads
from .schedule import PruneSchedule, counts_from_ratio
from .tensorstore import LayerEntry, ModelManifest, validate_manifest

CALIB_MODES = ("pruned", "original")


# ---------------------------------------------------------------------------
# Toy model definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToyModelSpec:
    """Dimensions and seed of a generated toy model."""

    n_layers: int = 8
    d_model: int = 32
    n_head: int = 4
    d_ff: int = 64
    seed: int = 0
    n_calib_batches: int = 4
    tokens_per_batch: int = 64

    def __post_init__(self):
        if self.d_model % self.n_head != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_head {self.n_head}")
        if min(self.n_layers, self.d_model, self.n_head, self.d_ff) < 1:
            raise ValueError("all dimensions must be >= 1")
        if min(self.n_calib_batches, self.tokens_per_batch) < 1:
            raise ValueError("calibration needs at least one batch of one token")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_head


@dataclass
class LayerWeights:
    """Weight views of one layer, plus its head layout."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w_up: np.ndarray
    w_gate: np.ndarray
    w_down: np.ndarray
    n_head: int
    d_head: int

    @classmethod
    def from_tensors(cls, entry: LayerEntry, tensors: dict) -> "LayerWeights":
        wq, wk, wv = (tensors[name] for name in entry.attn_coupled)
        w_up, w_gate = (tensors[name] for name in entry.ffn_coupled)
        return cls(
            wq=wq,
            wk=wk,
            wv=wv,
            wo=tensors[entry.attn_out],
            w_up=w_up,
            w_gate=w_gate,
            w_down=tensors[entry.ffn_down],
            n_head=entry.n_head,
            d_head=entry.d_head,
        )


def layer_names(layer: int) -> dict:
    prefix = f"layers.{layer}"
    return {
        "wq": f"{prefix}.attn.wq",
        "wk": f"{prefix}.attn.wk",
        "wv": f"{prefix}.attn.wv",
        "wo": f"{prefix}.attn.wo",
        "w_up": f"{prefix}.ffn.w_up",
        "w_gate": f"{prefix}.ffn.w_gate",
        "w_down": f"{prefix}.ffn.w_down",
    }


def gen_toy(spec: ToyModelSpec, seed: int | None = None):
    """Deterministic toy model plus synthetic calibration batches.

    Returns ``(tensors, manifest, calib)`` where ``calib`` is a list of
    (d_model, tokens) input activations. The same seed reproduces every
    array bit for bit. Head and channel magnitudes are drawn with a mild
    log-normal spread so pruning has genuinely uneven units to choose from.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    dm, dff, dh = spec.d_model, spec.d_ff, spec.d_head
    tensors = {}
    entries = []
    for layer in range(spec.n_layers):
        names = layer_names(layer)
        wq, wk, wv = (rng.normal(size=(dm, dm)) / np.sqrt(dm) for _ in range(3))
        wo = rng.normal(size=(dm, dm)) / np.sqrt(dm)
        head_scale = np.exp(0.5 * rng.normal(size=spec.n_head))
        for head in range(spec.n_head):
            wo[:, head * dh : (head + 1) * dh] *= head_scale[head]
        w_up = rng.normal(size=(dff, dm)) / np.sqrt(dm)
        w_gate = rng.normal(size=(dff, dm)) / np.sqrt(dm)
        w_down = rng.normal(size=(dm, dff)) / np.sqrt(dff)
        w_down *= np.exp(0.5 * rng.normal(size=dff))[None, :]
        tensors.update(
            {
                names["wq"]: wq,
                names["wk"]: wk,
                names["wv"]: wv,
                names["wo"]: wo,
                names["w_up"]: w_up,
                names["w_gate"]: w_gate,
                names["w_down"]: w_down,
            }
        )
        entries.append(
            LayerEntry(
                attn_out=names["wo"],
                attn_coupled=[names["wq"], names["wk"], names["wv"]],
                ffn_down=names["w_down"],
                ffn_coupled=[names["w_up"], names["w_gate"]],
                n_head=spec.n_head,
                d_head=dh,
            )
        )
    manifest = ModelManifest(n_layers=spec.n_layers, layers=entries)
    mixing = np.eye(dm) + 0.3 * rng.normal(size=(dm, dm)) / np.sqrt(dm)
    calib = [
        mixing @ rng.normal(size=(dm, spec.tokens_per_batch))
        for _ in range(spec.n_calib_batches)
    ]
    return tensors, manifest, calib


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def _rmsnorm(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt((x * x).mean(axis=0, keepdims=True) + 1e-6)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _attention(lw: LayerWeights, x: np.ndarray):
    """Causal attention; returns (stream after residual add, features into wo).

    Heads are evaluated one at a time and dead heads (all-zero output
    columns) are skipped: their contribution is exactly zero, and skipping
    keeps a zero-masked model numerically identical to its sliced form.
    """
    h = _rmsnorm(x)
    d = lw.d_head
    t = x.shape[1]
    causal = np.tril(np.ones((t, t), dtype=bool))
    ho = np.zeros((lw.n_head * d, t))
    out = np.zeros_like(x)
    for head in range(lw.n_head):
        sl = slice(head * d, (head + 1) * d)
        wo_block = lw.wo[:, sl]
        if not wo_block.any():
            continue
        q = np.ascontiguousarray(lw.wq[sl]) @ h
        k = np.ascontiguousarray(lw.wk[sl]) @ h
        v = np.ascontiguousarray(lw.wv[sl]) @ h
        scores = np.where(causal, (q.T @ k) / np.sqrt(d), -np.inf)
        ctx = v @ _softmax_rows(scores).T
        ho[sl] = ctx
        out += np.ascontiguousarray(wo_block) @ ctx
    return x + out, ho


def _ffn(lw: LayerWeights, x: np.ndarray):
    """Gated FFN; returns (stream after residual add, features into w_down).

    Channels whose down-projection column is all zero contribute exactly
    zero and are dropped before the matmuls, for the same masked/sliced
    equivalence as in attention.
    """
    h = _rmsnorm(x)
    d_ff = lw.w_down.shape[1]
    act = np.zeros((d_ff, x.shape[1]))
    live = np.flatnonzero(lw.w_down.any(axis=0))
    if live.size == 0:
        return x.copy(), act
    u = np.ascontiguousarray(lw.w_up[live]) @ h
    g = np.ascontiguousarray(lw.w_gate[live]) @ h
    a = _silu(g) * u
    act[live] = a
    y = np.ascontiguousarray(lw.w_down[:, live]) @ a
    return x + y, act


def forward_layer(lw: LayerWeights, x: np.ndarray, collect: bool = False):
    """One pre-norm residual block: attention then FFN.

    With ``collect=True`` also returns the feature matrices that feed the
    two prunable projections (inputs of ``wo`` and of ``w_down``).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != lw.wo.shape[0]:
        raise ValueError(f"activations shape {x.shape} inconsistent with d_model {lw.wo.shape[0]}")
    if lw.wq.shape[0] != lw.n_head * lw.d_head or lw.wo.shape[1] != lw.n_head * lw.d_head:
        raise ValueError("attention tensors inconsistent with head layout")
    x1, attn_feats = _attention(lw, x)
    x2, ffn_feats = _ffn(lw, x1)
    if collect:
        return x2, attn_feats, ffn_feats
    return x2


def forward_model(tensors: dict, manifest: ModelManifest, x: np.ndarray) -> np.ndarray:
    """Run activations through every layer of a manifest-described model."""
    for entry in manifest.layers:
        x = forward_layer(LayerWeights.from_tensors(entry, tensors), x)
    return x


# ---------------------------------------------------------------------------
# Pruning driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PruneConfig:
    """Knobs of one pruning run; snapshotted verbatim into the report."""

    damping: float = DEFAULT_DAMPING
    group_start: int = 1024
    group_min: int = 8
    refresh: str = "trailing"
    calib_mode: str = "pruned"
    seed: int | None = None

    def __post_init__(self):
        if self.refresh not in REFRESH_MODES:
            raise ValueError(f"refresh must be one of {REFRESH_MODES}")
        if self.calib_mode not in CALIB_MODES:
            raise ValueError(f"calib_mode must be one of {CALIB_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LayerReport:
    layer: int
    ratio: float
    heads_removed: int
    channels_removed: int
    sum_step_error: float
    output_sq_error: float
    kept_heads: list = field(default_factory=list)
    kept_channels: list = field(default_factory=list)


@dataclass
class PruneReport:
    """Per-layer diagnostics plus the schedule and config that produced them."""

    layers: list = field(default_factory=list)
    variant: str = "uniform"
    ratios: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "variant": self.variant,
            "ratios": list(self.ratios),
            "config": dict(self.config),
            "layers": [asdict(row) for row in self.layers],
        }
        if include_timing:
            out["wall_clock_s"] = self.wall_clock_s
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PruneReport":
        return cls(
            layers=[LayerReport(**row) for row in data["layers"]],
            variant=data["variant"],
            ratios=list(data["ratios"]),
            config=dict(data.get("config", {})),
            wall_clock_s=float(data.get("wall_clock_s", 0.0)),
        )

    def to_json(self) -> str:
        # Timing is excluded from the persisted form so identical runs
        # produce bit-identical report files; the CLI prints it instead.
        return json.dumps(self.to_dict(include_timing=False), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["layer", "ratio", "heads_removed", "channels_removed",
             "sum_step_error", "output_sq_error"]
        )
        for row in self.layers:
            writer.writerow(
                [row.layer, repr(row.ratio), row.heads_removed, row.channels_removed,
                 repr(row.sum_step_error), repr(row.output_sq_error)]
            )
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PruneReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _hessian_over_batches(feature_batches, damping: float, dim: int):
    acc = HessianAccumulator(dim)
    for feats in feature_batches:
        acc.accumulate(feats)
    return acc.finalize(damping)


def prune_model(
    tensors: dict,
    manifest: ModelManifest,
    calib,
    sched: PruneSchedule,
    config: PruneConfig = PruneConfig(),
):
    """Prune every layer at its scheduled ratio.

    Per layer, in order: record the attention projection's input features,
    build its damped Hessian, remove the scheduled number of heads, slice
    the coupled q/k/v rows, then do the same for FFN channels with the
    features recorded after the attention pruning took effect, and finally
    advance the calibration activations through the pruned layer. Returns
    ``(pruned_tensors, pruned_manifest, report)``.
    """
    validate_manifest(manifest, tensors)
    if sched.n_layers != manifest.n_layers:
        raise ValueError(
            f"schedule covers {sched.n_layers} layers, manifest has {manifest.n_layers}"
        )
    if not calib:
        raise ValueError("need at least one calibration batch")

    t_start = time.perf_counter()
    pruned = {name: np.array(arr, dtype=np.float64) for name, arr in tensors.items()}
    cur_acts = [np.asarray(x, dtype=np.float64) for x in calib]
    orig_acts = [x.copy() for x in cur_acts]
    new_entries = []
    report = PruneReport(
        variant=sched.variant,
        ratios=[float(r) for r in sched.ratios],
        config=config.to_dict(),
    )

    for idx, entry in enumerate(manifest.layers):
        ratio = float(sched.ratios[idx])
        orig_lw = LayerWeights.from_tensors(entry, tensors)
        n_prune_heads = counts_from_ratio(ratio, entry.n_head)
        d_ff = pruned[entry.ffn_down].shape[1]
        n_prune_ch = counts_from_ratio(ratio, d_ff)
        step_error = 0.0
        kept_heads = list(range(entry.n_head))
        kept_channels = list(range(d_ff))
        try:
            new_entry = replace(entry)

            if n_prune_heads > 0:
                if config.calib_mode == "original":
                    attn_feats = [_attention(orig_lw, x)[1] for x in orig_acts]
                else:
                    lw = LayerWeights.from_tensors(entry, pruned)
                    attn_feats = [_attention(lw, x)[1] for x in cur_acts]
                h_attn = _hessian_over_batches(
                    attn_feats, config.damping, entry.n_head * entry.d_head
                )
                layout = HeadLayout(entry.n_head, entry.d_head)
                result = prune_heads(
                    pruned[entry.attn_out], h_attn, layout, n_prune_heads, config.refresh
                )
                pruned[entry.attn_out] = result.pruned_w
                for name in entry.attn_coupled:
                    pruned[name] = pruned[name][result.kept_columns, :]
                step_error += result.step_error_sum
                kept_heads = list(result.kept_heads)
                new_entry = replace(new_entry, n_head=len(result.kept_heads))

            if n_prune_ch > 0:
                if config.calib_mode == "original":
                    ffn_feats = [
                        forward_layer(orig_lw, x, collect=True)[2] for x in orig_acts
                    ]
                else:
                    lw = LayerWeights.from_tensors(new_entry, pruned)
                    ffn_feats = [
                        _ffn(lw, _attention(lw, x)[0])[1] for x in cur_acts
                    ]
                h_ffn = _hessian_over_batches(ffn_feats, config.damping, d_ff)
                new_w, kept, steps = prune_channels(
                    pruned[entry.ffn_down], h_ffn, n_prune_ch, GroupSchedule(config.group_start, config.group_min)
                )
                pruned[entry.ffn_down] = new_w
                for name in entry.ffn_coupled:
                    pruned[name] = pruned[name][kept, :]
                step_error += sum(err for _, err in steps)
                kept_channels = [int(c) for c in kept]
        except (NotSpdError, np.linalg.LinAlgError) as exc:
            raise NotSpdError(f"pruning failed at layer {idx}: {exc}") from exc

        new_entries.append(new_entry)
        pruned_lw = LayerWeights.from_tensors(new_entry, pruned)
        cur_acts = [forward_layer(pruned_lw, x) for x in cur_acts]
        orig_acts = [forward_layer(orig_lw, x) for x in orig_acts]
        out_err = float(
            sum(((a - b) ** 2).sum() for a, b in zip(cur_acts, orig_acts))
        )
        report.layers.append(
            LayerReport(
                layer=idx,
                ratio=ratio,
                heads_removed=n_prune_heads,
                channels_removed=n_prune_ch,
                sum_step_error=float(step_error),
                output_sq_error=out_err,
                kept_heads=kept_heads,
                kept_channels=kept_channels,
            )
        )

    report.wall_clock_s = time.perf_counter() - t_start
    pruned_manifest = ModelManifest(n_layers=manifest.n_layers, layers=new_entries)
    validate_manifest(pruned_manifest, pruned)
    return pruned, pruned_manifest, report


# ---------------------------------------------------------------------------
# Report verification
# ---------------------------------------------------------------------------

def verify_report(
    report: PruneReport,
    manifest: ModelManifest | None = None,
    tensors: dict | None = None,
) -> list:
    """Re-check the report's internal invariants; returns a list of problems.

    With the pruned manifest/tensors supplied, also cross-checks the model
    structure against the report's removal counts.
    """
    from .schedule import VARIANTS, ratio_at  # local import avoids cycle confusion

    problems = []
    n = len(report.layers)
    if len(report.ratios) != n:
        problems.append(f"{len(report.ratios)} ratios for {n} layer rows")
    for row in report.layers:
        if not (np.isfinite(row.sum_step_error) and row.sum_step_error >= 0):
            problems.append(f"layer {row.layer}: bad sum_step_error {row.sum_step_error}")
        if not (np.isfinite(row.output_sq_error) and row.output_sq_error >= 0):
            problems.append(f"layer {row.layer}: bad output_sq_error {row.output_sq_error}")
        if not 0.0 <= row.ratio < 1.0:
            problems.append(f"layer {row.layer}: ratio {row.ratio} outside [0, 1)")
        if row.heads_removed < 0 or row.channels_removed < 0:
            problems.append(f"layer {row.layer}: negative removal count")
    if [row.layer for row in report.layers] != list(range(n)):
        problems.append("layer indices are not 0..n-1 in order")
    if report.variant in VARIANTS and n >= 2:
        r0, rn = report.ratios[0], report.ratios[-1]
        try:
            expect = [ratio_at(i, n, r0, rn, report.variant) for i in range(n)]
            if any(abs(a - b) > 1e-9 for a, b in zip(report.ratios, expect)):
                problems.append(f"ratios do not follow variant {report.variant!r}")
        except ValueError as exc:
            problems.append(f"schedule invalid for variant {report.variant!r}: {exc}")
    elif report.variant not in VARIANTS and report.variant != "custom":
        problems.append(f"unknown variant {report.variant!r}")

    if manifest is not None:
        if manifest.n_layers != n:
            problems.append(f"manifest has {manifest.n_layers} layers, report {n}")
        for row, entry in zip(report.layers, manifest.layers):
            if row.kept_heads and len(row.kept_heads) != entry.n_head:
                problems.append(
                    f"layer {row.layer}: {len(row.kept_heads)} kept heads in report, "
                    f"manifest says {entry.n_head}"
                )
        if tensors is not None:
            try:
                validate_manifest(manifest, tensors)
            except ObslimError as exc:
                problems.append(f"pruned model fails manifest validation: {exc}")
    return problems
