"""ModelSpec builders: plain conv stacks, a standard UNet, and the delayed UNet.

The delayed variant removes every decoder-to-decoder edge: each decoder
level consumes only its encoder skip, and all decoder outputs plus all
per-level prediction heads are upsampled to full resolution, concatenated,
and fed through two final convolutions.  Keeping the dense low-resolution
features out of the decoder chain preserves per-channel increment sparsity
until the very end of the network.

Every convolution is preceded by its own sparsification layer (a
before-each-conv-pair placement is available for the plain stack).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import ModelSpec, NodeSpec
from .tensors import TileShape

__all__ = ["UNetConfig", "build_plain_cnn", "build_unet", "build_delayed_unet"]


@dataclass
class UNetConfig:
    levels: int = 3
    base_channels: int = 8
    growth: int = 2
    kernel: int = 3
    activation: str = "relu"
    tp: float = 0.0
    tile: TileShape = field(default_factory=TileShape)
    pred_channels: int = 2
    in_shape: tuple[int, int, int] = (2, 64, 64)
    upsample_mode: str = "nearest"
    downsample: str = "stride"  # "stride" (stride-2 conv) or "maxpool"
    head_channels: int | None = None

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("a UNet needs at least 2 levels")
        _, h, w = self.in_shape
        div = 2 ** (self.levels - 1)
        if h % div or w % div:
            raise ValueError(f"spatial dims {h}x{w} must be divisible by {div} for {self.levels} levels")

    def level_channels(self, i: int) -> int:
        return self.base_channels * self.growth**i


class _SpecBuilder:
    """Accumulates nodes, giving each conv its own preceding sparsify layer."""

    def __init__(self, tp: float, tile: TileShape):
        self.tp = tp
        self.tile = tile
        self.nodes: list[NodeSpec] = []

    def add(self, node: NodeSpec) -> str:
        self.nodes.append(node)
        return node.id

    def sparsify(self, name: str, src: str) -> str:
        return self.add(NodeSpec(name, "sparsify", [src], {"tp": self.tp}))

    def conv(self, name: str, src: str, out_ch: int, kernel: int, stride: int = 1,
             padding: int | None = None, sparsify: bool = True) -> str:
        if sparsify:
            src = self.sparsify(f"{name}_sp", src)
        pad = kernel // 2 if padding is None else padding
        return self.add(NodeSpec(name, "conv", [src], {
            "out_channels": out_ch, "kernel": [kernel, kernel],
            "stride": stride, "padding": pad,
        }))

    def act(self, name: str, src: str, kind: str) -> str:
        return self.add(NodeSpec(name, kind, [src]))

    def upsample_to(self, name: str, src: str, factor: int, mode: str) -> str:
        """Upsampling by any power of two, chained through x4/x2 stages."""
        stage = 0
        while factor > 1:
            f = 4 if factor % 4 == 0 else 2
            src = self.add(NodeSpec(f"{name}_u{stage}" if factor > f or stage else name,
                                    "upsample", [src], {"factor": f, "mode": mode}))
            factor //= f
            stage += 1
        return src


def build_plain_cnn(
    depth: int,
    channels: int,
    tp: float,
    in_shape: tuple[int, int, int] = (2, 64, 64),
    kernel: int = 3,
    placement: str = "every",
    pool_every: int = 0,
    tile: TileShape | None = None,
    activation: str = "relu",
) -> ModelSpec:
    """Stack of [sparsify -> conv -> activation] blocks with optional pooling.

    placement "every" puts a sparsification layer ahead of each convolution;
    "pair" puts one ahead of each pair of convolutions.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if placement not in ("every", "pair"):
        raise ValueError(f"unknown sparsify placement {placement!r}")
    b = _SpecBuilder(tp, tile or TileShape())
    src = "input"
    for i in range(depth):
        want_sp = placement == "every" or i % 2 == 0
        src = b.conv(f"conv{i}", src, channels, kernel, sparsify=want_sp)
        src = b.act(f"act{i}", src, activation)
        if pool_every and (i + 1) % pool_every == 0 and i + 1 < depth:
            src = b.add(NodeSpec(f"pool{i}", "maxpool", [src], {"window": [2, 2], "stride": 2}))
    return ModelSpec(
        name=f"plain-cnn-d{depth}",
        input_shape=tuple(in_shape),
        nodes=b.nodes,
        output=src,
        tile=b.tile,
    )


def _encoder(b: _SpecBuilder, cfg: UNetConfig) -> list[str]:
    """Encoder chain; returns per-level activation node ids (full res first)."""
    skips = []
    src = "input"
    for i in range(cfg.levels):
        ch = cfg.level_channels(i)
        if i > 0:
            if cfg.downsample == "stride":
                src = b.conv(f"down{i}", src, ch, cfg.kernel, stride=2)
                src = b.act(f"down{i}_act", src, cfg.activation)
            else:
                src = b.add(NodeSpec(f"down{i}", "maxpool", [src], {"window": [2, 2], "stride": 2}))
        src = b.conv(f"enc{i}", src, ch, cfg.kernel)
        src = b.act(f"enc{i}_act", src, cfg.activation)
        skips.append(src)
    return skips


def _head(b: _SpecBuilder, cfg: UNetConfig, src: str) -> str:
    hc = cfg.head_channels or cfg.base_channels
    src = b.conv("head1", src, hc, cfg.kernel)
    src = b.act("head1_act", src, cfg.activation)
    return b.conv("head2", src, cfg.pred_channels, cfg.kernel)


def build_unet(cfg: UNetConfig) -> ModelSpec:
    """Standard UNet: each decoder consumes the upsampled deeper decoder plus its skip."""
    b = _SpecBuilder(cfg.tp, cfg.tile)
    skips = _encoder(b, cfg)
    preds = []
    d = skips[-1]
    for i in range(cfg.levels - 2, -1, -1):
        up = b.add(NodeSpec(f"dec{i}_up", "upsample", [d], {"factor": 2, "mode": cfg.upsample_mode}))
        cat = b.add(NodeSpec(f"dec{i}_cat", "concat", [up, skips[i]]))
        d = b.conv(f"dec{i}", cat, cfg.level_channels(i), cfg.kernel)
        d = b.act(f"dec{i}_act", d, cfg.activation)
        preds.append(b.conv(f"pred{i}", d, cfg.pred_channels, 1))
    out = _head(b, cfg, d)
    return ModelSpec(
        name=f"unet-l{cfg.levels}",
        input_shape=tuple(cfg.in_shape),
        nodes=b.nodes,
        output=out,
        aux_outputs=preds,
        tile=cfg.tile,
    )


def build_delayed_unet(cfg: UNetConfig) -> ModelSpec:
    """Delayed UNet: decoders read only their encoder skip; everything is
    upsampled to full resolution and concatenated ahead of the final two convs."""
    b = _SpecBuilder(cfg.tp, cfg.tile)
    skips = _encoder(b, cfg)
    parts = []
    for i, skip in enumerate(skips):
        d = b.conv(f"dec{i}", skip, cfg.level_channels(i), cfg.kernel)
        d = b.act(f"dec{i}_act", d, cfg.activation)
        p = b.conv(f"pred{i}", d, cfg.pred_channels, 1)
        parts.append(b.upsample_to(f"dec{i}_full", d, 2**i, cfg.upsample_mode))
        parts.append(b.upsample_to(f"pred{i}_full", p, 2**i, cfg.upsample_mode))
    cat = b.add(NodeSpec("delayed_cat", "concat", parts))
    out = _head(b, cfg, cat)
    return ModelSpec(
        name=f"delayed-unet-l{cfg.levels}",
        input_shape=tuple(cfg.in_shape),
        nodes=b.nodes,
        output=out,
        tile=cfg.tile,
    )
