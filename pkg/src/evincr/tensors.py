"""Dense activation tensors, tile masks, and the dense reference operators.

All activations are float32 arrays of shape (C, H, W), channel-planar.
A tile mask summarizes, per channel, which h x w regions of the paired
tensor are entirely zero so downstream operators can skip them.  The
dense_* functions are the plain (non-incremental) reference operators;
the incremental execution paths are validated against them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided

__all__ = [
    "TileShape",
    "TileMask",
    "IncrementTensor",
    "as_tensor",
    "grid_shape",
    "make_tile_mask",
    "all_true_mask",
    "all_false_mask",
    "mask_or",
    "mask_to_pixels",
    "integrate",
    "dense_conv2d",
    "dense_linear",
    "dense_maxpool",
    "dense_upsample",
    "resolve_activation",
]

DEFAULT_TILE = (6, 6)


def as_tensor(data) -> np.ndarray:
    """Coerce to a contiguous float32 (C, H, W) array."""
    t = np.ascontiguousarray(data, dtype=np.float32)
    if t.ndim != 3:
        raise ValueError(f"expected a 3-D (C, H, W) tensor, got shape {t.shape}")
    return t


@dataclass(frozen=True)
class TileShape:
    """Spatial extent of one mask tile, in pixels."""

    h: int = DEFAULT_TILE[0]
    w: int = DEFAULT_TILE[1]

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ValueError(f"tile sides must be >= 1, got {self.h}x{self.w}")


def grid_shape(shape: tuple[int, int, int], tile: TileShape) -> tuple[int, int, int]:
    """Tile-grid shape (C, ceil(H/h), ceil(W/w)) covering a (C, H, W) tensor."""
    c, h, w = shape
    return c, -(-h // tile.h), -(-w // tile.w)


@dataclass(frozen=True, eq=False)
class TileMask:
    """Per-channel boolean tile grid; False marks a tile known to be all-zero.

    A True entry is allowed to cover an all-zero tile (conservative), but a
    False entry must never cover a nonzero element of the paired tensor.
    """

    flags: np.ndarray
    tile: TileShape = field(default_factory=TileShape)

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=bool)
        if flags.ndim != 3:
            raise ValueError(f"mask grid must be 3-D (C, gh, gw), got {flags.shape}")
        object.__setattr__(self, "flags", flags)

    @property
    def grid(self) -> tuple[int, int, int]:
        return self.flags.shape

    def false_fraction(self) -> float:
        return float(1.0 - self.flags.mean()) if self.flags.size else 0.0

    def covers(self, shape: tuple[int, int, int]) -> bool:
        return self.grid == grid_shape(shape, self.tile)


def make_tile_mask(t: np.ndarray, tile: TileShape) -> TileMask:
    """Exact mask: a tile is True iff it contains at least one nonzero.

    Boundary tiles cover the partial remainder when the tile shape does not
    divide H or W.
    """
    t = as_tensor(t)
    c, h, w = t.shape
    gh, gw = -(-h // tile.h), -(-w // tile.w)
    ph, pw = gh * tile.h - h, gw * tile.w - w
    if ph or pw:
        t = np.pad(t, ((0, 0), (0, ph), (0, pw)))
    blocks = t.reshape(c, gh, tile.h, gw, tile.w)
    flags = blocks.any(axis=(2, 4))
    return TileMask(flags, tile)


def all_true_mask(shape: tuple[int, int, int], tile: TileShape) -> TileMask:
    return TileMask(np.ones(grid_shape(shape, tile), dtype=bool), tile)


def all_false_mask(shape: tuple[int, int, int], tile: TileShape) -> TileMask:
    return TileMask(np.zeros(grid_shape(shape, tile), dtype=bool), tile)


def mask_or(a: TileMask, b: TileMask) -> TileMask:
    """Elementwise logical OR of two masks over the same grid."""
    if a.tile != b.tile:
        raise ValueError(f"tile shape mismatch: {a.tile} vs {b.tile}")
    if a.grid != b.grid:
        raise ValueError(f"mask grid mismatch: {a.grid} vs {b.grid}")
    return TileMask(a.flags | b.flags, a.tile)


def mask_to_pixels(mask: TileMask, h: int, w: int) -> np.ndarray:
    """Expand a tile grid to a per-pixel boolean array of shape (C, h, w)."""
    px = np.repeat(np.repeat(mask.flags, mask.tile.h, axis=1), mask.tile.w, axis=2)
    return px[:, :h, :w]


@dataclass(frozen=True, eq=False)
class IncrementTensor:
    """Step-to-step difference tensor paired with a sound tile mask."""

    values: np.ndarray
    mask: TileMask

    def __post_init__(self):
        values = as_tensor(self.values)
        object.__setattr__(self, "values", values)
        if not self.mask.covers(values.shape):
            raise ValueError(
                f"mask grid {self.mask.grid} does not cover tensor {values.shape} "
                f"at tile {self.mask.tile.h}x{self.mask.tile.w}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def tile(self) -> TileShape:
        return self.mask.tile

    @classmethod
    def from_dense(cls, values: np.ndarray, tile: TileShape) -> "IncrementTensor":
        values = as_tensor(values)
        return cls(values, make_tile_mask(values, tile))

    @classmethod
    def zeros(cls, shape: tuple[int, int, int], tile: TileShape) -> "IncrementTensor":
        return cls(np.zeros(shape, dtype=np.float32), all_false_mask(shape, tile))


def integrate(dense: np.ndarray, incr: IncrementTensor) -> np.ndarray:
    """Fold an increment onto a dense tensor; False tiles contribute nothing."""
    dense = as_tensor(dense)
    if dense.shape != incr.shape:
        raise ValueError(f"shape mismatch: {dense.shape} vs {incr.shape}")
    c, h, w = dense.shape
    live = mask_to_pixels(incr.mask, h, w)
    return dense + np.where(live, incr.values, np.float32(0.0))


# ---------------------------------------------------------------------------
# Dense reference operators
# ---------------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, h_out: int, w_out: int) -> np.ndarray:
    """View a padded (C, Hp, Wp) array as (C*kh*kw, h_out*w_out) patch columns."""
    c = xp.shape[0]
    s0, s1, s2 = xp.strides
    view = as_strided(
        xp,
        shape=(c, kh, kw, h_out, w_out),
        strides=(s0, s1, s2, s1 * stride, s2 * stride),
    )
    return view.reshape(c * kh * kw, h_out * w_out)


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ValueError(
            f"kernel {kh}x{kw} with stride {stride}, padding {padding} "
            f"does not fit a {h}x{w} input"
        )
    return h_out, w_out


def dense_conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Cross-correlation convolution with zero padding (reference path)."""
    x = as_tensor(x)
    weight = np.asarray(weight, dtype=np.float32)
    if weight.ndim != 4:
        raise ValueError(f"weight must be (C_out, C_in, K_h, K_w), got {weight.shape}")
    c_out, c_in, kh, kw = weight.shape
    c, h, w = x.shape
    if c != c_in:
        raise ValueError(f"input has {c} channels but weight expects {c_in}")
    h_out, w_out = conv_output_hw(h, w, kh, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = _im2col(xp, kh, kw, stride, h_out, w_out)
    y = weight.reshape(c_out, -1) @ cols
    y = y.reshape(c_out, h_out, w_out)
    if bias is not None:
        y = y + np.asarray(bias, dtype=np.float32).reshape(c_out, 1, 1)
    return np.ascontiguousarray(y, dtype=np.float32)


def dense_linear(x_flat: np.ndarray, matrix: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    x_flat = np.asarray(x_flat, dtype=np.float32).reshape(-1)
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[1] != x_flat.shape[0]:
        raise ValueError(f"matrix {matrix.shape} does not apply to vector of length {x_flat.shape[0]}")
    y = matrix @ x_flat
    if bias is not None:
        y = y + np.asarray(bias, dtype=np.float32)
    return y.astype(np.float32)


def dense_maxpool(x: np.ndarray, window: tuple[int, int] = (2, 2), stride: int = 2) -> np.ndarray:
    x = as_tensor(x)
    c, h, w = x.shape
    wh, ww = window
    if wh > h or ww > w:
        raise ValueError(f"pool window {wh}x{ww} larger than input {h}x{w}")
    h_out = (h - wh) // stride + 1
    w_out = (w - ww) // stride + 1
    s0, s1, s2 = x.strides
    view = as_strided(
        x,
        shape=(c, h_out, w_out, wh, ww),
        strides=(s0, s1 * stride, s2 * stride, s1, s2),
    )
    return np.ascontiguousarray(view.max(axis=(3, 4)), dtype=np.float32)


def _bilinear_axis(n_in: int, factor: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel source indices and weights for one upsampled axis."""
    src = (np.arange(n_in * factor, dtype=np.float32) + 0.5) / factor - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = (src - i0).astype(np.float32)
    i1 = np.clip(i0 + 1, 0, n_in - 1)
    i0 = np.clip(i0, 0, n_in - 1)
    return i0, i1, frac


def dense_upsample(x: np.ndarray, factor: int, mode: str = "nearest") -> np.ndarray:
    x = as_tensor(x)
    if factor not in (2, 4):
        raise ValueError(f"upsample factor must be 2 or 4, got {factor}")
    if mode == "nearest":
        return np.ascontiguousarray(np.repeat(np.repeat(x, factor, axis=1), factor, axis=2))
    if mode != "bilinear":
        raise ValueError(f"unknown upsample mode {mode!r}")
    _, h, w = x.shape
    r0, r1, rf = _bilinear_axis(h, factor)
    c0, c1, cf = _bilinear_axis(w, factor)
    rows = x[:, r0, :] * (1.0 - rf)[None, :, None] + x[:, r1, :] * rf[None, :, None]
    out = rows[:, :, c0] * (1.0 - cf)[None, None, :] + rows[:, :, c1] * cf[None, None, :]
    return np.ascontiguousarray(out, dtype=np.float32)


def _relu(x):
    return np.maximum(x, np.float32(0.0))


def _sigmoid(x):
    return (1.0 / (1.0 + np.exp(-x))).astype(np.float32)


def _tanh(x):
    return np.tanh(x).astype(np.float32)


def resolve_activation(kind: str, alpha: float = 0.01):
    """Map an activation name to its elementwise function."""
    if kind == "relu":
        return _relu
    if kind == "sigmoid":
        return _sigmoid
    if kind == "tanh":
        return _tanh
    if kind == "leaky_relu":
        a = np.float32(alpha)

        def _leaky(x):
            return np.where(x > 0, x, a * x).astype(np.float32)

        return _leaky
    raise ValueError(f"unknown activation {kind!r}")
