"""Error-feedback sparsification of increment tensors.

Each step rounds the residual-corrected increment to the nearest multiple
of a rounding step k and carries the round-off error forward, so small
values collapse to exact zeros (restoring tile sparsity) while the
cumulative emitted-vs-true error per element stays bounded by k/2.

When a threshold parameter tp > 0 is set, k tracks tp times a rolling
L2 norm of the corrected input; with tp == 0 the layer either passes
increments through unchanged (k == 0) or uses a manually pinned k.
"""

from __future__ import annotations

import numpy as np

from .tensors import IncrementTensor, TileShape, make_tile_mask

__all__ = ["SparsifyState", "sparsify_step"]


class SparsifyState:
    """Residual tensor, rolling input norm, and rounding step for one layer."""

    def __init__(
        self,
        shape: tuple[int, int, int],
        tp: float = 0.0,
        ema_decay: float = 0.9,
        k: float = 0.0,
    ):
        if tp < 0:
            raise ValueError("threshold parameter must be >= 0")
        if not (0.0 < ema_decay < 1.0):
            raise ValueError("ema_decay must lie in (0, 1)")
        self.shape = tuple(shape)
        self.tp = float(tp)
        self.ema_decay = float(ema_decay)
        self.delta = np.zeros(self.shape, dtype=np.float32)
        self.norm_ema = 0.0
        self.k = float(k)

    def reset(self, dense_input: np.ndarray) -> None:
        """Re-initialize at a dense pass: clear the residual, seed the norm."""
        dense_input = np.asarray(dense_input, dtype=np.float32)
        if dense_input.shape != self.shape:
            raise ValueError(f"dense input {dense_input.shape} vs state {self.shape}")
        self.delta = np.zeros(self.shape, dtype=np.float32)
        self.norm_ema = float(np.linalg.norm(dense_input))
        if self.tp > 0:
            self.k = self.tp * self.norm_ema


def sparsify_step(x: IncrementTensor, state: SparsifyState) -> IncrementTensor:
    """Round the corrected increment to multiples of k; keep the residual.

    The emitted mask is recomputed from the emitted values, so tiles that
    rounded to all-zero become False.  k == 0 short-circuits to identity
    on the corrected increment and clears the residual.
    """
    if x.shape != state.shape:
        raise ValueError(f"increment {x.shape} vs state {state.shape}")
    corrected = state.delta + x.values
    k = state.k
    if k > 0:
        k32 = np.float32(k)
        y = k32 * np.floor(np.float32(0.5) + corrected / k32)
        state.delta = corrected - y
    else:
        y = corrected
        state.delta = np.zeros(state.shape, dtype=np.float32)
    state.norm_ema = state.ema_decay * state.norm_ema + (1.0 - state.ema_decay) * float(
        np.linalg.norm(corrected)
    )
    if state.tp > 0:
        state.k = state.tp * state.norm_ema
    tile: TileShape = x.tile
    return IncrementTensor(y.astype(np.float32, copy=False), make_tile_mask(y, tile))
