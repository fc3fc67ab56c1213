"""Incremental CNN inference on event-camera streams.

Forward passes run on the sparse difference between consecutive window
encodings; tile-masked operators skip work over all-zero regions, and
error-feedback sparsification layers keep deep increments sparse with a
bounded residual.  Periodic dense refresh passes eliminate drift.
"""

from .bench import BenchReport, replay, static_dense_flops, sweep
from .events import (
    EncoderKind,
    Event,
    EventStream,
    EventWindow,
    encode,
    parse_encoder,
    read_events,
    slice_window,
    step_increment,
    write_events,
)
from .graph import (
    CycleError,
    FlopReport,
    Graph,
    GraphError,
    ModelSpec,
    NodeSpec,
    ShapeError,
    WeightError,
    WeightManifest,
    build,
)
from .increment_ops import (
    AccState,
    ConvParams,
    FlopCounter,
    flatten_increment,
    inc_activation,
    inc_add,
    inc_concat,
    inc_conv2d,
    inc_linear,
    inc_maxpool,
    inc_mul,
    inc_upsample,
)
from .models import UNetConfig, build_delayed_unet, build_plain_cnn, build_unet
from .sparsify import SparsifyState, sparsify_step
from .synth import generate_events
from .tensors import (
    IncrementTensor,
    TileMask,
    TileShape,
    dense_conv2d,
    dense_linear,
    dense_maxpool,
    dense_upsample,
    integrate,
    make_tile_mask,
    mask_or,
    mask_to_pixels,
    resolve_activation,
)

__version__ = "0.1.0"
