"""Command-line harness.

Subcommands:
  synth    generate a deterministic synthetic event stream (EVB file)
  model    emit a builder ModelSpec as YAML
  weights  emit seeded random weights (manifest + blob) for a model
  run      replay sliding windows in dense / incr / both mode
  sweep    run once per value of tp or shift, write summary CSV
  drift    per-step drift curve with refresh markers

``run`` writes <out>.csv and <out>.yaml; ``sweep`` and ``drift`` write a
single CSV.  All outputs are reproducible except wall-time columns.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import bench
from .events import parse_encoder, read_events, write_events
from .graph import ModelSpec, WeightManifest
from .models import UNetConfig, build_delayed_unet, build_plain_cnn, build_unet
from .synth import generate_events
from .tensors import TileShape


def _tile(text: str) -> TileShape:
    h, _, w = text.partition("x")
    return TileShape(int(h), int(w))


def _shape(text: str) -> tuple[int, int, int]:
    parts = [int(v) for v in text.split("x")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("shape must be CxHxW")
    return tuple(parts)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model spec YAML")
    p.add_argument("--weights", required=True, help="weight manifest YAML")
    p.add_argument("--events", required=True, help="event stream (EVB or CSV)")
    p.add_argument("--encoder", default="count", help="count | timestamp | voxel:B")
    p.add_argument("--window-us", type=int, default=50_000)
    p.add_argument("--shift-us", type=int, default=1_000)
    p.add_argument("--tp", type=float, default=None, help="override every sparsify threshold")
    p.add_argument("--refresh-n", type=int, default=64, help="refresh interval (0 = never)")
    p.add_argument("--tile", type=_tile, default=None, help="override tile as HxW")
    p.add_argument("--max-steps", type=int, default=0, help="cap the number of windows (0 = all)")
    p.add_argument("--seed", type=int, default=0, help="recorded in run metadata")
    p.add_argument("--out", required=True)


def _load_run_inputs(args):
    spec = ModelSpec.load(args.model)
    if args.tile is not None:
        spec.tile = args.tile
    if args.tp is not None:
        spec = spec.with_tp(args.tp)
    weights = WeightManifest.load(args.weights).tensors()
    stream = read_events(args.events)
    encoder = parse_encoder(args.encoder)
    return spec, weights, stream, encoder


def _cmd_synth(args) -> int:
    stream = generate_events(
        seed=args.seed,
        duration_us=args.duration_us,
        rate_hz=args.rate,
        n_objects=args.objects,
        sensor_size=(args.sensor.h, args.sensor.w),
    )
    write_events(stream, args.out, fmt="evb")
    print(f"wrote {len(stream)} events to {args.out}")
    return 0


def _cmd_model(args) -> int:
    tile = args.tile or TileShape()
    if args.arch == "plain":
        spec = build_plain_cnn(
            depth=args.depth, channels=args.channels, tp=args.tp,
            in_shape=args.input, tile=tile,
        )
    else:
        cfg = UNetConfig(
            levels=args.levels, base_channels=args.base_channels, tp=args.tp,
            in_shape=args.input, tile=tile, pred_channels=args.pred_channels,
        )
        spec = build_unet(cfg) if args.arch == "unet" else build_delayed_unet(cfg)
    spec.save(args.out)
    print(f"wrote {spec.name} ({len(spec.nodes)} nodes, {spec.parameter_count()} parameters) to {args.out}")
    return 0


def _cmd_weights(args) -> int:
    spec = ModelSpec.load(args.model)
    manifest = WeightManifest.generate(spec, seed=args.seed, out_dir=args.out_dir, stem=args.stem)
    print(f"wrote {len(manifest.entries)} tensors to {manifest.blob_path}")
    return 0


def _cmd_run(args) -> int:
    spec, weights, stream, encoder = _load_run_inputs(args)
    report = bench.replay(
        spec, weights, stream, encoder,
        window_us=args.window_us, shift_us=args.shift_us, mode=args.mode,
        refresh_interval=args.refresh_n, max_steps=args.max_steps,
        meta={"seed": args.seed, "events": str(args.events), "tp_override": args.tp},
    )
    out = Path(args.out)
    csv_path = out.with_suffix(".csv")
    report.write_csv(csv_path)
    report.write_summary(out.with_suffix(".yaml"))
    s = report.summary()
    print(
        f"{s['steps']} steps, flop reduction {s['flop_reduction_pct']:.1f}%"
        + (f", mean drift {s['mean_drift']:.3g}" if "mean_drift" in s else "")
    )
    return 0


def _cmd_sweep(args) -> int:
    spec, weights, stream, encoder = _load_run_inputs(args)
    values = [float(v) for v in args.values.split(",") if v != ""]
    rows = bench.sweep(
        args.param, values, spec, weights, stream, encoder,
        window_us=args.window_us, shift_us=args.shift_us, mode=args.mode,
        refresh_interval=args.refresh_n, max_steps=args.max_steps,
    )
    with open(args.out, "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        wr.writeheader()
        wr.writerows(rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def _cmd_drift(args) -> int:
    spec, weights, stream, encoder = _load_run_inputs(args)
    report = bench.replay(
        spec, weights, stream, encoder,
        window_us=args.window_us, shift_us=args.shift_us, mode="both",
        refresh_interval=args.refresh_n, max_steps=args.max_steps,
        meta={"seed": args.seed, "events": str(args.events)},
    )
    with open(args.out, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["step", "tau_us", "drift", "refreshed", "performed_flops"])
        for r in report.records:
            wr.writerow([r.step, r.tau_us, f"{(r.drift or 0.0):.8g}", int(r.refreshed), r.performed_flops])
    print(f"wrote drift curve ({len(report.records)} steps) to {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evincr", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic event stream")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--duration-us", type=int, default=250_000)
    sp.add_argument("--rate", type=float, default=50_000.0, help="events per second")
    sp.add_argument("--objects", type=int, default=2)
    sp.add_argument("--sensor", type=_tile, default=TileShape(64, 64), help="HxW")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_synth)

    mp = sub.add_parser("model", help="emit a builder ModelSpec YAML")
    mp.add_argument("--arch", choices=["plain", "unet", "delayed-unet"], required=True)
    mp.add_argument("--input", type=_shape, default=(2, 64, 64), help="CxHxW")
    mp.add_argument("--depth", type=int, default=4)
    mp.add_argument("--channels", type=int, default=16)
    mp.add_argument("--levels", type=int, default=3)
    mp.add_argument("--base-channels", type=int, default=8)
    mp.add_argument("--pred-channels", type=int, default=2)
    mp.add_argument("--tp", type=float, default=0.1)
    mp.add_argument("--tile", type=_tile, default=None)
    mp.add_argument("--out", required=True)
    mp.set_defaults(fn=_cmd_model)

    wp = sub.add_parser("weights", help="emit seeded random weights for a model")
    wp.add_argument("--model", required=True)
    wp.add_argument("--seed", type=int, default=0)
    wp.add_argument("--out-dir", required=True)
    wp.add_argument("--stem", default="weights")
    wp.set_defaults(fn=_cmd_weights)

    rp = sub.add_parser("run", help="replay sliding windows through a model")
    _add_run_args(rp)
    rp.add_argument("--mode", choices=["dense", "incr", "both"], default="both")
    rp.set_defaults(fn=_cmd_run)

    vp = sub.add_parser("sweep", help="sweep tp or shift, one run per value")
    _add_run_args(vp)
    vp.add_argument("--mode", choices=["dense", "incr", "both"], default="both")
    vp.add_argument("--param", choices=["tp", "shift"], required=True)
    vp.add_argument("--values", required=True, help="comma-separated values")
    vp.set_defaults(fn=_cmd_sweep)

    dp = sub.add_parser("drift", help="per-step drift curve with refresh markers")
    _add_run_args(dp)
    dp.set_defaults(fn=_cmd_drift)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"evincr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
