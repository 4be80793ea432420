"""Command-line front end: gen-toy, prune, verify, report.

Exit codes: 0 success, 1 usage error, 2 numerical or validation failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import DEFAULT_DAMPING
from .errors import ObslimError
from .pipeline import (
    PruneConfig,
    PruneReport,
    ToyModelSpec,
    gen_toy,
    prune_model,
    verify_report,
)
from .schedule import build_schedule
from .tensorstore import ModelManifest, read_tensor_file, write_tensor_file

VARIANT_FLAGS = {
    "log-inc": "log_increase",
    "lin-inc": "linear_increase",
    "uniform": "uniform",
    "log-dec": "log_decrease",
    "lin-dec": "linear_decrease",
}


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; this CLI uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obslim", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("gen-toy", help="generate a deterministic toy model + calibration set")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--layers", type=int, default=8)
    gen.add_argument("--d-model", type=int, default=32)
    gen.add_argument("--heads", type=int, default=4)
    gen.add_argument("--d-ff", type=int, default=64)
    gen.add_argument("--batches", type=int, default=4)
    gen.add_argument("--tokens", type=int, default=64)

    prune = sub.add_parser("prune", help="prune a model at scheduled per-layer ratios")
    prune.add_argument("--model", required=True)
    prune.add_argument("--manifest", required=True)
    prune.add_argument("--calib", required=True)
    prune.add_argument("--out", required=True, help="output directory")
    prune.add_argument("--config", help="JSON config file; flags override its values")
    prune.add_argument("--ratio-first", type=float, default=None)
    prune.add_argument("--ratio-last", type=float, default=None)
    prune.add_argument("--global-target", type=float, default=None)
    prune.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default=None)
    prune.add_argument("--damping", type=float, default=None)
    prune.add_argument("--group-start", type=int, default=None)
    prune.add_argument("--group-min", type=int, default=None)
    prune.add_argument("--seed", type=int, default=None)
    prune.add_argument("--refresh", choices=("trailing", "reinvert"), default=None)
    prune.add_argument("--calib-mode", choices=("pruned", "original"), default=None)

    ver = sub.add_parser("verify", help="re-check the invariants of a written report")
    ver.add_argument("--report", required=True)
    ver.add_argument("--manifest", help="pruned manifest to cross-check")
    ver.add_argument("--model", help="pruned model to cross-check")

    rep = sub.add_parser("report", help="print a report as a per-layer table")
    rep.add_argument("--report", required=True)
    rep.add_argument("--csv", help="also write the per-layer table as CSV")
    return parser


def _cmd_gen_toy(args) -> int:
    spec = ToyModelSpec(
        n_layers=args.layers,
        d_model=args.d_model,
        n_head=args.heads,
        d_ff=args.d_ff,
        seed=args.seed,
        n_calib_batches=args.batches,
        tokens_per_batch=args.tokens,
    )
    tensors, manifest, calib = gen_toy(spec)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.obt")
    calib_path = os.path.join(args.out, "calib.obt")
    manifest_path = os.path.join(args.out, "manifest.json")
    write_tensor_file(tensors, model_path)
    write_tensor_file({f"calib.{i}": x for i, x in enumerate(calib)}, calib_path)
    manifest.save(manifest_path)
    print(f"wrote {model_path} ({len(tensors)} tensors), {manifest_path}, "
          f"{calib_path} ({len(calib)} batches)")
    return 0


def _merged_settings(args) -> dict:
    """Config-file values overridden by explicitly given flags."""
    settings = {
        "ratio_first": None,
        "ratio_last": None,
        "global_target": None,
        "variant": None,
        "damping": DEFAULT_DAMPING,
        "group_start": 1024,
        "group_min": 8,
        "seed": None,
        "refresh": "trailing",
        "calib_mode": "pruned",
    }
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(settings)
        if unknown:
            raise ObslimError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key in settings:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            settings[key] = flag_val
    return settings


def _layer_param_weights(manifest: ModelManifest, tensors: dict) -> np.ndarray:
    """Prunable parameter count per layer (anchor plus coupled tensors)."""
    weights = []
    for entry in manifest.layers:
        count = tensors[entry.attn_out].size + tensors[entry.ffn_down].size
        count += sum(tensors[name].size for name in entry.attn_coupled)
        count += sum(tensors[name].size for name in entry.ffn_coupled)
        weights.append(count)
    return np.asarray(weights, dtype=np.float64)


def _cmd_prune(args) -> int:
    settings = _merged_settings(args)
    tensors = read_tensor_file(args.model)
    manifest = ModelManifest.load(args.manifest)
    calib_map = read_tensor_file(args.calib)
    calib = list(calib_map.values())

    variant = VARIANT_FLAGS.get(settings["variant"], settings["variant"]) or "log_increase"
    r0 = settings["ratio_first"] if settings["ratio_first"] is not None else 0.0
    n = manifest.n_layers
    if settings["global_target"] is not None:
        sched = build_schedule(
            n,
            variant,
            r0=r0,
            global_target=settings["global_target"],
            layer_param_weights=_layer_param_weights(manifest, tensors),
        )
    else:
        rn = settings["ratio_last"] if settings["ratio_last"] is not None else r0
        sched = build_schedule(n, variant, r0=r0, rn=rn)

    config = PruneConfig(
        damping=settings["damping"],
        group_start=settings["group_start"],
        group_min=settings["group_min"],
        refresh=settings["refresh"],
        calib_mode=settings["calib_mode"],
        seed=settings["seed"],
    )
    pruned, pruned_manifest, report = prune_model(tensors, manifest, calib, sched, config)

    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.obt")
    write_tensor_file(pruned, model_path)
    pruned_manifest.save(os.path.join(args.out, "manifest.json"))
    report.save(os.path.join(args.out, "report.json"))
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    total_params = sum(a.size for a in tensors.values())
    kept_params = sum(a.size for a in pruned.values())
    print(_format_report(report))
    print(f"params {total_params} -> {kept_params} "
          f"({1.0 - kept_params / total_params:.1%} removed); "
          f"wall clock {report.wall_clock_s:.2f}s; outputs in {args.out}")
    return 0


def _format_report(report: PruneReport) -> str:
    lines = [
        f"variant: {report.variant}",
        f"{'layer':>5} {'ratio':>7} {'heads-':>6} {'chans-':>6} "
        f"{'sum_step_error':>15} {'output_sq_error':>16}",
    ]
    for row in report.layers:
        lines.append(
            f"{row.layer:>5} {row.ratio:>7.4f} {row.heads_removed:>6} "
            f"{row.channels_removed:>6} {row.sum_step_error:>15.6g} "
            f"{row.output_sq_error:>16.6g}"
        )
    return "\n".join(lines)


def _cmd_verify(args) -> int:
    report = PruneReport.load(args.report)
    manifest = ModelManifest.load(args.manifest) if args.manifest else None
    tensors = read_tensor_file(args.model) if args.model else None
    problems = verify_report(report, manifest, tensors)
    if problems:
        for problem in problems:
            print(f"FAIL: {problem}")
        return 2
    print(f"report OK: {len(report.layers)} layers, variant {report.variant}")
    return 0


def _cmd_report(args) -> int:
    report = PruneReport.load(args.report)
    print(_format_report(report))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"wrote {args.csv}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handler = {
        "gen-toy": _cmd_gen_toy,
        "prune": _cmd_prune,
        "verify": _cmd_verify,
        "report": _cmd_report,
    }[args.command]
    try:
        return handler(args)
    except (ObslimError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
