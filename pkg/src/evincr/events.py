"""Event stream ingestion, sliding time windows, and CNN input encoders.

Events are brightness-change packets (t, x, y, p) from an event camera,
stored column-wise as sorted numpy arrays.  Two file formats are supported:

* EVB: magic ``EVB1`` | u16 H | u16 W | u64 count | count packed records
  ``{u64 t_us, u16 x, u16 y, i8 p}``, all little-endian.
* CSV: header ``t_us,x,y,p``, one event per row (rows may be unsorted).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensors import IncrementTensor, TileShape, make_tile_mask

__all__ = [
    "Event",
    "EventStream",
    "EventWindow",
    "EncoderKind",
    "parse_encoder",
    "read_events",
    "write_events",
    "slice_window",
    "encode",
    "step_increment",
]

EVB_MAGIC = b"EVB1"
_EVB_HEADER = struct.Struct("<4sHHQ")
_EVB_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])


@dataclass(frozen=True)
class Event:
    t: int
    x: int
    y: int
    p: int


class EventStream:
    """Sorted, in-bounds event packets for one sensor.

    Columns are kept as parallel arrays; events are sorted nondecreasing
    in timestamp (a stable sort is applied on construction if needed).
    """

    def __init__(self, sensor_size: tuple[int, int], t, x, y, p):
        h, w = int(sensor_size[0]), int(sensor_size[1])
        if h < 1 or w < 1:
            raise ValueError(f"sensor size must be positive, got {h}x{w}")
        t = np.asarray(t, dtype=np.uint64)
        x = np.asarray(x, dtype=np.uint16)
        y = np.asarray(y, dtype=np.uint16)
        p = np.asarray(p, dtype=np.int8)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise ValueError("event columns must be 1-D arrays of equal length")
        if t.size and np.any(np.diff(t.astype(np.int64)) < 0):
            order = np.argsort(t, kind="stable")
            t, x, y, p = t[order], x[order], y[order], p[order]
        if x.size:
            if int(x.max()) >= w or int(y.max()) >= h:
                raise ValueError(
                    f"event coordinates exceed sensor bounds {h}x{w} "
                    f"(max x={int(x.max())}, max y={int(y.max())})"
                )
            bad = np.flatnonzero(np.abs(p.astype(np.int16)) != 1)
            if bad.size:
                raise ValueError(f"polarity must be -1 or +1, got {int(p[bad[0]])} at event {int(bad[0])}")
        self.sensor_size = (h, w)
        self.t, self.x, self.y, self.p = t, x, y, p

    def __len__(self) -> int:
        return self.t.size

    def __iter__(self):
        for i in range(len(self)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EventStream)
            and self.sensor_size == other.sensor_size
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    @property
    def duration_us(self) -> int:
        return int(self.t[-1]) if len(self) else 0


@dataclass(frozen=True)
class EventWindow:
    """Events of a stream with t in the half-open interval (tau - delta, tau]."""

    stream: EventStream
    lo: int
    hi: int
    tau: int
    delta: int

    def __len__(self) -> int:
        return self.hi - self.lo

    @property
    def ts(self) -> np.ndarray:
        return self.stream.t[self.lo : self.hi]

    @property
    def xs(self) -> np.ndarray:
        return self.stream.x[self.lo : self.hi]

    @property
    def ys(self) -> np.ndarray:
        return self.stream.y[self.lo : self.hi]

    @property
    def ps(self) -> np.ndarray:
        return self.stream.p[self.lo : self.hi]


@dataclass(frozen=True)
class EncoderKind:
    """Window-to-tensor encoding: ``count``, ``timestamp``, or ``voxel``."""

    kind: str
    bins: int = 1

    def __post_init__(self):
        if self.kind not in ("count", "timestamp", "voxel"):
            raise ValueError(f"unknown encoder {self.kind!r}")
        if self.bins < 1:
            raise ValueError("voxel bin count must be >= 1")

    @property
    def channels(self) -> int:
        return self.bins if self.kind == "voxel" else 2


def parse_encoder(spec: str) -> EncoderKind:
    """Parse a CLI encoder spec: ``count``, ``timestamp``, or ``voxel:B``."""
    if spec.startswith("voxel"):
        _, _, b = spec.partition(":")
        return EncoderKind("voxel", int(b) if b else 5)
    return EncoderKind(spec)


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------


def write_events(stream: EventStream, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "evb")
    if fmt == "evb":
        rec = np.empty(len(stream), dtype=_EVB_RECORD)
        rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
        h, w = stream.sensor_size
        with open(path, "wb") as f:
            f.write(_EVB_HEADER.pack(EVB_MAGIC, h, w, len(stream)))
            f.write(rec.tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["t_us", "x", "y", "p"])
            for i in range(len(stream)):
                wr.writerow([int(stream.t[i]), int(stream.x[i]), int(stream.y[i]), int(stream.p[i])])
    else:
        raise ValueError(f"unknown event format {fmt!r}")


def _read_csv(path: Path, sensor_size: tuple[int, int] | None) -> EventStream:
    ts, xs, ys, ps = [], [], [], []
    with open(path, newline="") as f:
        rd = csv.reader(f)
        header = next(rd, None)
        if header is None or [c.strip() for c in header] != ["t_us", "x", "y", "p"]:
            raise ValueError(f"{path}: expected CSV header 't_us,x,y,p', got {header}")
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            try:
                t, x, y, p = int(row[0]), int(row[1]), int(row[2]), int(row[3])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed event row {row!r}") from exc
            if t < 0 or x < 0 or y < 0:
                raise ValueError(f"{path}:{lineno}: negative field in event row {row!r}")
            ts.append(t)
            xs.append(x)
            ys.append(y)
            ps.append(p)
    if sensor_size is None:
        h = (max(ys) + 1) if ys else 1
        w = (max(xs) + 1) if xs else 1
        sensor_size = (h, w)
    return EventStream(sensor_size, ts, xs, ys, ps)


def _read_evb(path: Path) -> EventStream:
    blob = path.read_bytes()
    if len(blob) < _EVB_HEADER.size:
        raise ValueError(f"{path}: truncated EVB header ({len(blob)} bytes)")
    magic, h, w, count = _EVB_HEADER.unpack_from(blob)
    if magic != EVB_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {EVB_MAGIC!r}")
    need = _EVB_HEADER.size + count * _EVB_RECORD.itemsize
    if len(blob) < need:
        raise ValueError(f"{path}: EVB declares {count} events but file holds {len(blob)} < {need} bytes")
    rec = np.frombuffer(blob, dtype=_EVB_RECORD, count=count, offset=_EVB_HEADER.size)
    return EventStream((h, w), rec["t"], rec["x"], rec["y"], rec["p"])


def read_events(path, fmt: str | None = None, sensor_size: tuple[int, int] | None = None) -> EventStream:
    """Load an event stream from an EVB or CSV file (format from suffix by default)."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "evb")
    if fmt == "evb":
        return _read_evb(path)
    if fmt == "csv":
        return _read_csv(path, sensor_size)
    raise ValueError(f"unknown event format {fmt!r}")


# ---------------------------------------------------------------------------
# Windows and encoders
# ---------------------------------------------------------------------------


def slice_window(stream: EventStream, tau: int, delta: int) -> EventWindow:
    """Select events with tau - delta < t <= tau via binary search."""
    if delta <= 0:
        raise ValueError("window length must be positive")
    lo = int(np.searchsorted(stream.t, max(tau - delta, 0), side="right"))
    if tau - delta < 0:
        lo = 0
    hi = int(np.searchsorted(stream.t, tau, side="right"))
    return EventWindow(stream, lo, hi, tau, delta)


def encode(window: EventWindow, kind: EncoderKind) -> np.ndarray:
    """Encode a window into a float32 (C, H, W) tensor.

    * ``count``: channel 0 counts p=+1 events per pixel, channel 1 counts p=-1.
    * ``timestamp``: per pixel and polarity, the normalized time
      (t - (tau - delta)) / delta of the most recent event, 0 if none.
    * ``voxel``: B temporal bins; each event adds p * max(0, 1 - |b - t*|)
      to bin b with t* = (t - (tau - delta)) * (B - 1) / delta.
    """
    h, w = window.stream.sensor_size
    xs = window.xs.astype(np.int64)
    ys = window.ys.astype(np.int64)
    ps = window.ps.astype(np.float32)
    t0 = window.tau - window.delta
    rel = (window.ts.astype(np.float64) - float(t0)) / float(window.delta)

    if kind.kind == "count":
        out = np.zeros((2, h, w), dtype=np.float32)
        pos = ps > 0
        np.add.at(out[0], (ys[pos], xs[pos]), 1.0)
        np.add.at(out[1], (ys[~pos], xs[~pos]), 1.0)
        return out

    if kind.kind == "timestamp":
        out = np.zeros((2, h, w), dtype=np.float32)
        tn = rel.astype(np.float32)
        pos = ps > 0
        np.maximum.at(out[0], (ys[pos], xs[pos]), tn[pos])
        np.maximum.at(out[1], (ys[~pos], xs[~pos]), tn[~pos])
        return out

    b = kind.bins
    out = np.zeros((b, h, w), dtype=np.float32)
    if len(window) == 0:
        return out
    tstar = (rel * (b - 1)).astype(np.float32)
    lo_bin = np.floor(tstar).astype(np.int64)
    frac = tstar - lo_bin
    for bins, vals in ((lo_bin, ps * (1.0 - frac)), (lo_bin + 1, ps * frac)):
        ok = (bins >= 0) & (bins < b)
        np.add.at(out, (bins[ok], ys[ok], xs[ok]), vals[ok])
    return out


def step_increment(prev: np.ndarray, cur: np.ndarray, tile: TileShape) -> IncrementTensor:
    """Difference of consecutive encodings with its exact tile mask."""
    prev = np.asarray(prev, dtype=np.float32)
    cur = np.asarray(cur, dtype=np.float32)
    if prev.shape != cur.shape:
        raise ValueError(f"shape mismatch: {prev.shape} vs {cur.shape}")
    values = cur - prev
    return IncrementTensor(values, make_tile_mask(values, tile))
