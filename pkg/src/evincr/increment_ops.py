"""Increment-domain versions of the forward-pass operators.

Each operator maps an input increment (difference between consecutive
step inputs) to the corresponding output increment.  Linear operators
(conv, matmul, add, concat, upsample) act on the increment directly and
drop biases, which cancel in the difference.  Nonlinear operators (ReLU
family, elementwise multiply, maxpool) carry an accumulator holding the
running sum of all increments seen since the last dense pass, so the
output increment can be formed as f(acc + dx) - f(acc).

The tile-masked convolution skips, per input channel, every filter
application whose receptive field touches no True tile of that channel;
straddling receptive fields gather from True tiles only.  The FLOP meter
counts exactly the multiply-accumulates of that skip scheme (2 FLOPs per
MAC); padding taps count whenever the enclosing application executes, so
a fully True mask meters the dense-equivalent count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensors import (
    IncrementTensor,
    TileMask,
    TileShape,
    all_false_mask,
    all_true_mask,
    conv_output_hw,
    dense_conv2d,
    dense_maxpool,
    dense_upsample,
    grid_shape,
    mask_or,
    mask_to_pixels,
    make_tile_mask,
    _bilinear_axis,
)

__all__ = [
    "ConvParams",
    "AccState",
    "FlopCounter",
    "inc_conv2d",
    "inc_linear",
    "inc_add",
    "inc_activation",
    "inc_mul",
    "inc_concat",
    "inc_upsample",
    "inc_maxpool",
    "flatten_increment",
]


@dataclass(frozen=True)
class ConvParams:
    """Static convolution geometry: kernel, channel counts, stride, padding."""

    kernel: tuple[int, int]
    c_in: int
    c_out: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")

    @classmethod
    def from_weight(cls, weight: np.ndarray, stride: int = 1, padding: int = 0) -> "ConvParams":
        c_out, c_in, kh, kw = weight.shape
        return cls((kh, kw), c_in, c_out, stride, padding)


@dataclass
class AccState:
    """Running sum of increments seen by a nonlinear node since the last dense pass."""

    x_acc: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, int, int]) -> "AccState":
        return cls(np.zeros(shape, dtype=np.float32))

    def set_dense(self, x: np.ndarray) -> None:
        self.x_acc = np.array(x, dtype=np.float32, copy=True)

    def fold(self, dx: np.ndarray) -> None:
        self.x_acc = self.x_acc + dx


@dataclass
class FlopCounter:
    """Floating-point operation meter: 2 ops per multiply-accumulate."""

    performed: int = 0
    dense_equiv: int = 0

    def add(self, performed: int, dense_equiv: int) -> None:
        self.performed += int(performed)
        self.dense_equiv += int(dense_equiv)

    def reset(self) -> None:
        self.performed = 0
        self.dense_equiv = 0

    def snapshot(self) -> tuple[int, int]:
        return self.performed, self.dense_equiv


def _tiles_any(px: np.ndarray, tile: TileShape) -> np.ndarray:
    """Reduce a per-pixel boolean (C, H, W) array to its tile grid with any()."""
    c, h, w = px.shape
    gh, gw = -(-h // tile.h), -(-w // tile.w)
    ph, pw = gh * tile.h - h, gw * tile.w - w
    if ph or pw:
        px = np.pad(px, ((0, 0), (0, ph), (0, pw)))
    return px.reshape(c, gh, tile.h, gw, tile.w).any(axis=(2, 4))


def inc_conv2d(
    x: IncrementTensor,
    weight: np.ndarray,
    params: ConvParams,
    meter: FlopCounter,
) -> IncrementTensor:
    """Tile-skipping sparse convolution of an input increment (bias dropped)."""
    weight = np.asarray(weight, dtype=np.float32)
    c_out, c_in, kh, kw = weight.shape
    if params.kernel != (kh, kw) or params.c_in != c_in or params.c_out != c_out:
        raise ValueError(f"weight shape {weight.shape} disagrees with {params}")
    c, h, w = x.shape
    if c != c_in:
        raise ValueError(f"increment has {c} channels but conv expects {c_in}")
    st, pad = params.stride, params.padding
    h_out, w_out = conv_output_hw(h, w, kh, kw, st, pad)
    tile = x.tile
    kk = kh * kw
    meter.add(0, 2 * kk * c_in * c_out * h_out * w_out)

    out_shape = (c_out, h_out, w_out)
    flags = x.mask.flags
    if not flags.any():
        return IncrementTensor(np.zeros(out_shape, dtype=np.float32), all_false_mask(out_shape, tile))
    if flags.all():
        # Every filter application runs over every tap.
        meter.add(2 * kk * c_in * c_out * h_out * w_out, 0)
        y = dense_conv2d(x.values, weight, None, stride=st, padding=pad)
        return IncrementTensor(y, all_true_mask(out_shape, tile))

    live = mask_to_pixels(x.mask, h, w)
    live_p = np.pad(live, ((0, 0), (pad, pad), (pad, pad))) if pad else live
    dead_p = np.pad(~live, ((0, 0), (pad, pad), (pad, pad))) if pad else ~live
    xp = np.pad(x.values, ((0, 0), (pad, pad), (pad, pad))) if pad else x.values

    y = np.zeros(out_shape, dtype=np.float32)
    w_mat = weight.reshape(c_out, c_in, kk)
    active_any = np.zeros((h_out, w_out), dtype=bool)
    macs = 0
    for ci in range(c_in):
        if not flags[ci].any():
            continue
        true_cnt = np.zeros((h_out, w_out), dtype=np.int64)
        dead_cnt = np.zeros((h_out, w_out), dtype=np.int64)
        for r in range(kh):
            for s in range(kw):
                true_cnt += live_p[ci, r : r + st * h_out : st, s : s + st * w_out : st]
                dead_cnt += dead_p[ci, r : r + st * h_out : st, s : s + st * w_out : st]
        runs = true_cnt > 0
        n_runs = int(runs.sum())
        if n_runs == 0:
            continue
        # An executing application spends K*K taps minus the in-bounds taps
        # it skips for landing in False tiles.
        macs += n_runs * kk - int(dead_cnt[runs].sum())
        active_any |= runs
        uu, vv = np.nonzero(runs)
        base_u, base_v = uu * st, vv * st
        cols = np.empty((kk, n_runs), dtype=np.float32)
        k = 0
        for r in range(kh):
            for s in range(kw):
                cols[k] = xp[ci, base_u + r, base_v + s]
                k += 1
        y[:, uu, vv] += w_mat[:, ci, :] @ cols
    meter.add(2 * c_out * macs, 0)

    out_flags = np.broadcast_to(_tiles_any(active_any[None], tile), grid_shape(out_shape, tile))
    return IncrementTensor(y, TileMask(np.ascontiguousarray(out_flags), tile))


def flatten_increment(x: IncrementTensor) -> IncrementTensor:
    """Ravel to (1, 1, L) with a run-of-(h*w)-elements tile mask."""
    run = x.tile.h * x.tile.w
    flat = np.ascontiguousarray(x.values.reshape(1, 1, -1))
    tile = TileShape(1, run)
    return IncrementTensor(flat, make_tile_mask(flat, tile))


def inc_linear(x_flat: IncrementTensor, matrix: np.ndarray, meter: FlopCounter) -> IncrementTensor:
    """Matrix application to a flattened increment; False-tile columns skipped."""
    matrix = np.asarray(matrix, dtype=np.float32)
    c, h, length = x_flat.shape
    if (c, h) != (1, 1):
        raise ValueError(f"inc_linear expects a (1, 1, L) increment, got {x_flat.shape}")
    rows, cols = matrix.shape
    if cols != length:
        raise ValueError(f"matrix {matrix.shape} does not apply to increment of length {length}")
    meter.add(0, 2 * rows * cols)
    out_shape = (1, 1, rows)
    tile = x_flat.tile
    active = mask_to_pixels(x_flat.mask, 1, length)[0, 0]
    idx = np.flatnonzero(active)
    y = np.zeros(rows, dtype=np.float32)
    if idx.size:
        y = matrix[:, idx] @ x_flat.values[0, 0, idx]
        meter.add(2 * rows * idx.size, 0)
    return IncrementTensor(y.reshape(out_shape), all_true_mask(out_shape, tile))


def inc_add(a: IncrementTensor, b: IncrementTensor) -> IncrementTensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return IncrementTensor(a.values + b.values, mask_or(a.mask, b.mask))


def inc_activation(x: IncrementTensor, state: AccState, fn) -> IncrementTensor:
    """f(acc + dx) - f(acc); False tiles yield exact zeros since dx is zero there."""
    if state.x_acc.shape != x.shape:
        raise ValueError(f"accumulator shape {state.x_acc.shape} vs increment {x.shape}")
    y = fn(state.x_acc + x.values) - fn(state.x_acc)
    state.fold(x.values)
    return IncrementTensor(y.astype(np.float32, copy=False), x.mask)


def inc_mul(
    a: IncrementTensor,
    b: IncrementTensor,
    sa: AccState,
    sb: AccState,
) -> IncrementTensor:
    """Elementwise product increment from two dense-to-sparse multiplies."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    y = (sa.x_acc + a.values) * b.values + sb.x_acc * a.values
    mask = mask_or(a.mask, b.mask)
    sa.fold(a.values)
    sb.fold(b.values)
    return IncrementTensor(y, mask)


def inc_concat(parts: list[IncrementTensor]) -> IncrementTensor:
    if not parts:
        raise ValueError("concat of zero parts")
    first = parts[0]
    for p in parts[1:]:
        if p.shape[1:] != first.shape[1:]:
            raise ValueError(f"spatial mismatch in concat: {p.shape} vs {first.shape}")
        if p.tile != first.tile:
            raise ValueError(f"tile mismatch in concat: {p.tile} vs {first.tile}")
    values = np.concatenate([p.values for p in parts], axis=0)
    flags = np.concatenate([p.mask.flags for p in parts], axis=0)
    return IncrementTensor(values, TileMask(flags, first.tile))


def inc_upsample(x: IncrementTensor, factor: int, mode: str = "nearest") -> IncrementTensor:
    """Linear upsampling applied to the increment; mask follows the support."""
    y = dense_upsample(x.values, factor, mode)
    _, h, w = x.shape
    live = mask_to_pixels(x.mask, h, w)
    if mode == "nearest":
        rows = np.arange(h * factor) // factor
        cols = np.arange(w * factor) // factor
        out_live = live[:, rows][:, :, cols]
    else:
        r0, r1, _ = _bilinear_axis(h, factor)
        c0, c1, _ = _bilinear_axis(w, factor)
        row_live = live[:, r0] | live[:, r1]
        out_live = row_live[:, :, c0] | row_live[:, :, c1]
    return IncrementTensor(y, TileMask(_tiles_any(out_live, x.tile), x.tile))


def inc_maxpool(
    x: IncrementTensor,
    state: AccState,
    window: tuple[int, int] = (2, 2),
    stride: int = 2,
) -> IncrementTensor:
    """maxpool(acc + dx) - maxpool(acc) with the mask coarsened to pooled resolution."""
    if state.x_acc.shape != x.shape:
        raise ValueError(f"accumulator shape {state.x_acc.shape} vs increment {x.shape}")
    before = dense_maxpool(state.x_acc, window, stride)
    after = dense_maxpool(state.x_acc + x.values, window, stride)
    state.fold(x.values)
    y = after - before
    c, h, w = x.shape
    wh, ww = window
    h_out = (h - wh) // stride + 1
    w_out = (w - ww) // stride + 1
    live = mask_to_pixels(x.mask, h, w)
    pooled = np.zeros((c, h_out, w_out), dtype=bool)
    for r in range(wh):
        for s in range(ww):
            pooled |= live[:, r : r + stride * h_out : stride, s : s + stride * w_out : stride]
    return IncrementTensor(y, TileMask(_tiles_any(pooled, x.tile), x.tile))
