"""Sliding-window replay harness: dense vs incremental runs with reporting.

A replay slides a window over an event stream, encodes each window, and
drives a Graph: the first window runs a dense pass, later windows feed
encoding differences through incr_step, and a dense reconstruction run
happens whenever the refresh interval elapses.  ``mode="both"`` computes
an independent dense forward per window to fill the drift column.

Reports carry one record per executed step plus enough metadata to
reproduce the run; wall-clock columns time the forward calls only.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .events import EncoderKind, EventStream, encode, slice_window, step_increment
from .graph import Graph, ModelSpec, build

__all__ = ["StepRecord", "BenchReport", "replay", "sweep", "static_dense_flops"]


@dataclass
class StepRecord:
    step: int
    tau_us: int
    refreshed: bool
    wall_incr_us: float | None
    wall_dense_us: float | None
    performed_flops: int
    dense_equiv_flops: int
    input_false_frac: float
    drift: float | None
    false_frac: dict[str, float] = field(default_factory=dict)


@dataclass
class BenchReport:
    meta: dict
    records: list[StepRecord]
    layer_ids: list[str]

    def totals(self) -> tuple[int, int]:
        return (
            sum(r.performed_flops for r in self.records),
            sum(r.dense_equiv_flops for r in self.records),
        )

    def summary(self) -> dict:
        performed, dense_equiv = self.totals()
        drifts = [r.drift for r in self.records if r.drift is not None]
        incr = [r.wall_incr_us for r in self.records if r.wall_incr_us is not None]
        dense = [r.wall_dense_us for r in self.records if r.wall_dense_us is not None]
        out = {
            "meta": dict(self.meta),
            "steps": len(self.records),
            "performed_flops": performed,
            "dense_equiv_flops": dense_equiv,
            "flop_reduction_pct": 100.0 * (1.0 - performed / dense_equiv) if dense_equiv else 0.0,
            "mean_input_false_frac": float(np.mean([r.input_false_frac for r in self.records]))
            if self.records
            else 0.0,
            "mean_false_frac_per_layer": {
                nid: float(np.mean([r.false_frac.get(nid, 0.0) for r in self.records]))
                for nid in self.layer_ids
            },
        }
        if drifts:
            out["mean_drift"] = float(np.mean(drifts))
            out["max_drift"] = float(np.max(drifts))
        if incr:
            out["mean_wall_incr_us"] = float(np.mean(incr))
        if dense:
            out["mean_wall_dense_us"] = float(np.mean(dense))
        return out

    def columns(self) -> list[str]:
        mode = self.meta.get("mode", "incr")
        cols = ["step", "tau_us", "refreshed", "performed_flops", "dense_equiv_flops"]
        if mode in ("incr", "both"):
            cols += ["wall_incr_us", "input_false_frac"]
        if mode in ("dense", "both"):
            cols += ["wall_dense_us"]
        if mode == "both":
            cols += ["drift"]
        cols += [f"false_frac_{nid}" for nid in self.layer_ids if mode != "dense"]
        return cols

    def write_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(cols)
            for r in self.records:
                row = []
                for c in cols:
                    if c.startswith("false_frac_"):
                        row.append(f"{r.false_frac.get(c[len('false_frac_'):], 0.0):.6f}")
                    elif c == "refreshed":
                        row.append(int(r.refreshed))
                    elif c in ("wall_incr_us", "wall_dense_us", "drift", "input_false_frac"):
                        v = getattr(r, c)
                        row.append("" if v is None else f"{v:.6f}" if c != "drift" else f"{v:.8g}")
                    else:
                        row.append(getattr(r, c))
                wr.writerow(row)

    def write_summary(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.summary(), sort_keys=False))


def static_dense_flops(spec: ModelSpec) -> int:
    """FLOPs one fully dense pass of the model performs (2 per MAC)."""
    shapes = spec.infer_shapes()
    total = 0
    for n in spec.nodes:
        if n.kind == "conv":
            c_in = shapes[n.inputs[0]][0]
            kh, kw = (int(v) for v in n.attrs.get("kernel", [3, 3]))
            c_out, h_out, w_out = shapes[n.id]
            total += 2 * kh * kw * c_in * c_out * h_out * w_out
        elif n.kind == "linear":
            c, h, w = shapes[n.inputs[0]]
            total += 2 * int(n.attrs["out_features"]) * c * h * w
    return total


def _window_taus(stream: EventStream, window_us: int, shift_us: int, max_steps: int) -> list[int]:
    end = stream.duration_us
    taus = list(range(window_us, end + 1, shift_us))
    if max_steps:
        taus = taus[:max_steps]
    return taus


def replay(
    spec: ModelSpec,
    weights,
    stream: EventStream,
    encoder: EncoderKind,
    window_us: int = 50_000,
    shift_us: int = 1_000,
    mode: str = "incr",
    refresh_interval: int = 64,
    max_steps: int = 0,
    meta: dict | None = None,
) -> BenchReport:
    if mode not in ("dense", "incr", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    c, h, w = spec.input_shape
    if encoder.channels != c:
        raise ValueError(f"encoder produces {encoder.channels} channels, model expects {c}")
    if stream.sensor_size != (h, w):
        raise ValueError(f"stream sensor {stream.sensor_size} does not match model input {h}x{w}")
    taus = _window_taus(stream, window_us, shift_us, max_steps)
    if not taus:
        raise ValueError(
            f"no full {window_us}us window fits a stream of {stream.duration_us}us"
        )
    graph = build(spec, weights, refresh_interval=refresh_interval)
    dense_cost = static_dense_flops(spec)
    layer_ids = [n.id for n in spec.nodes if n.kind in ("conv", "linear")]
    run_meta = {
        "model": spec.name,
        "mode": mode,
        "encoder": encoder.kind if encoder.kind != "voxel" else f"voxel:{encoder.bins}",
        "window_us": window_us,
        "shift_us": shift_us,
        "refresh_interval": refresh_interval,
        "tile": [spec.tile.h, spec.tile.w],
        "steps_available": len(taus),
    }
    run_meta.update(meta or {})

    records: list[StepRecord] = []
    prev_enc = None
    for step, tau in enumerate(taus):
        x = encode(slice_window(stream, tau, window_us), encoder)
        wall_incr = wall_dense = drift = None
        refreshed = False
        performed = dense_equiv = 0
        ff: dict[str, float] = {}
        input_ff = 0.0
        if mode == "dense":
            t0 = time.perf_counter_ns()
            graph.dense_oracle(x)
            wall_dense = (time.perf_counter_ns() - t0) / 1e3
            performed = dense_equiv = dense_cost
        else:
            base = graph.flop_report()
            t0 = time.perf_counter_ns()
            if prev_enc is None:
                graph.dense_pass(x)
                refreshed = True
            else:
                dx = step_increment(prev_enc, x, spec.tile)
                input_ff = dx.mask.false_fraction()
                _, _, step_report = graph.incr_step(dx)
                ff = dict(step_report.false_tile_frac)
                if graph.refresh_due:
                    graph.refresh(x)
                    refreshed = True
            wall_incr = (time.perf_counter_ns() - t0) / 1e3
            after = graph.flop_report()
            performed = after.performed - base.performed
            dense_equiv = after.dense_equiv - base.dense_equiv
            if mode == "both":
                t0 = time.perf_counter_ns()
                oracle_y = graph.dense_oracle(x)
                wall_dense = (time.perf_counter_ns() - t0) / 1e3
                drift = graph.drift(oracle_y)
        records.append(
            StepRecord(
                step=step,
                tau_us=tau,
                refreshed=refreshed,
                wall_incr_us=wall_incr,
                wall_dense_us=wall_dense,
                performed_flops=performed,
                dense_equiv_flops=dense_equiv,
                input_false_frac=input_ff,
                drift=drift,
                false_frac=ff,
            )
        )
        prev_enc = x
    return BenchReport(meta=run_meta, records=records, layer_ids=layer_ids)


def sweep(
    param: str,
    values: list[float],
    spec: ModelSpec,
    weights,
    stream: EventStream,
    encoder: EncoderKind,
    window_us: int = 50_000,
    shift_us: int = 1_000,
    mode: str = "both",
    refresh_interval: int = 64,
    max_steps: int = 0,
) -> list[dict]:
    """One replay per value of ``tp`` or ``shift``; returns summary rows."""
    if param not in ("tp", "shift"):
        raise ValueError(f"sweep parameter must be 'tp' or 'shift', got {param!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for v in values:
        run_spec = spec.with_tp(float(v)) if param == "tp" else spec
        run_shift = shift_us if param == "tp" else int(v)
        report = replay(
            run_spec, weights, stream, encoder,
            window_us=window_us, shift_us=run_shift, mode=mode,
            refresh_interval=refresh_interval, max_steps=max_steps,
            meta={"sweep_param": param, "sweep_value": v},
        )
        s = report.summary()
        rows.append(
            {
                "param": param,
                "value": v,
                "mean_flop_reduction_pct": s["flop_reduction_pct"],
                "mean_drift": s.get("mean_drift", ""),
                "mean_wall_incr_us": s.get("mean_wall_incr_us", ""),
                "mean_input_false_frac": s["mean_input_false_frac"],
            }
        )
    return rows
