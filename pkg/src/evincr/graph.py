"""Operator DAG construction, weight loading, and the inference session.

A Graph owns per-node mutable state (increment accumulators, sparsifier
residuals, FLOP meters) and runs in three modes:

* ``dense_pass``  -- full dense forward; seeds accumulators and baselines.
* ``incr_step``   -- propagates an input increment through the increment
  operators and folds the output increment into the integrated output.
* ``refresh``     -- identical contract to dense_pass; rebuilding all state
  from a dense input resets accumulated drift to zero.

ModelSpec documents are YAML (see README for the schema); weights live in
a YAML manifest naming tensors inside a raw little-endian float32 blob.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

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
from .sparsify import SparsifyState, sparsify_step
from .tensors import (
    IncrementTensor,
    TileShape,
    all_true_mask,
    as_tensor,
    conv_output_hw,
    dense_conv2d,
    dense_linear,
    dense_maxpool,
    dense_upsample,
    integrate,
    resolve_activation,
)

__all__ = [
    "GraphError",
    "CycleError",
    "WeightError",
    "ShapeError",
    "NodeSpec",
    "ModelSpec",
    "WeightManifest",
    "FlopReport",
    "Graph",
    "build",
]

ACTIVATION_KINDS = ("relu", "sigmoid", "tanh", "leaky_relu")
NODE_KINDS = ACTIVATION_KINDS + (
    "conv",
    "linear",
    "add",
    "mul",
    "concat",
    "upsample",
    "maxpool",
    "sparsify",
)
_ARITY = {"add": 2, "mul": 2}

DEFAULT_REFRESH_INTERVAL = 64


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


class WeightError(GraphError):
    pass


class ShapeError(GraphError):
    pass


@dataclass
class NodeSpec:
    """One operator node: id, kind, input node ids, and kind-specific attributes."""

    id: str
    kind: str
    inputs: list[str]
    attrs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "inputs": list(self.inputs)}
        d.update(self.attrs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NodeSpec":
        d = dict(d)
        return cls(
            id=str(d.pop("id")),
            kind=str(d.pop("kind")),
            inputs=[str(i) for i in d.pop("inputs")],
            attrs=d,
        )


@dataclass
class ModelSpec:
    """Declarative operator DAG with a designated input and output."""

    name: str
    input_shape: tuple[int, int, int]
    nodes: list[NodeSpec]
    output: str
    aux_outputs: list[str] = field(default_factory=list)
    tile: TileShape = field(default_factory=TileShape)
    input_id: str = "input"

    # -- validation and shape propagation ---------------------------------

    def topo_order(self) -> list[NodeSpec]:
        """Topological order of the node list, ties broken by node id."""
        import heapq

        by_id = {}
        for n in self.nodes:
            if n.id == self.input_id:
                raise GraphError(f"node id {n.id!r} collides with the input id")
            if n.id in by_id:
                raise GraphError(f"duplicate node id {n.id!r}")
            if n.kind not in NODE_KINDS:
                raise GraphError(f"node {n.id!r}: unknown kind {n.kind!r}")
            by_id[n.id] = n
        indeg = {}
        consumers: dict[str, list[str]] = {}
        for n in self.nodes:
            want = _ARITY.get(n.kind, None)
            if want is not None and len(n.inputs) != want:
                raise GraphError(f"node {n.id!r}: {n.kind} takes {want} inputs, got {len(n.inputs)}")
            if n.kind == "concat" and not n.inputs:
                raise GraphError(f"node {n.id!r}: concat needs at least one input")
            if n.kind not in ("add", "mul", "concat") and len(n.inputs) != 1:
                raise GraphError(f"node {n.id!r}: {n.kind} takes 1 input, got {len(n.inputs)}")
            deg = 0
            for i in n.inputs:
                if i == self.input_id:
                    continue
                if i not in by_id:
                    raise GraphError(f"node {n.id!r} references unknown input {i!r}")
                consumers.setdefault(i, []).append(n.id)
                deg += 1
            indeg[n.id] = deg
        heap = sorted(nid for nid, d in indeg.items() if d == 0)
        heapq.heapify(heap)
        order = []
        while heap:
            nid = heapq.heappop(heap)
            order.append(by_id[nid])
            for c in consumers.get(nid, ()):
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(order) != len(self.nodes):
            stuck = sorted(set(indeg) - {n.id for n in order})
            raise CycleError(f"cycle detected among nodes {stuck}")
        for out in [self.output, *self.aux_outputs]:
            if out not in by_id:
                raise GraphError(f"designated output {out!r} is not a node")
        return order

    def infer_shapes(self) -> dict[str, tuple[int, int, int]]:
        """Propagate (C, H, W) shapes through the DAG, validating every node."""
        shapes = {self.input_id: tuple(self.input_shape)}
        for n in self.topo_order():
            ins = [shapes[i] for i in n.inputs]
            shapes[n.id] = _node_out_shape(n, ins)
        return shapes

    def _weight_specs(self, shapes: dict[str, tuple[int, int, int]]) -> list[tuple[str, tuple[int, ...]]]:
        specs = []
        for n in self.nodes:
            if n.kind == "conv":
                c_in = shapes[n.inputs[0]][0]
                kh, kw = n.attrs.get("kernel", [3, 3])
                c_out = int(n.attrs["out_channels"])
                specs.append((f"{n.id}.weight", (c_out, c_in, int(kh), int(kw))))
                specs.append((f"{n.id}.bias", (c_out,)))
            elif n.kind == "linear":
                c, h, w = shapes[n.inputs[0]]
                f = int(n.attrs["out_features"])
                specs.append((f"{n.id}.weight", (f, c * h * w)))
                specs.append((f"{n.id}.bias", (f,)))
        return specs

    def weight_specs(self) -> list[tuple[str, tuple[int, ...]]]:
        return self._weight_specs(self.infer_shapes())

    def parameter_count(self) -> int:
        return int(sum(np.prod(s) for _, s in self.weight_specs()))

    def with_tp(self, tp: float) -> "ModelSpec":
        """Copy of the spec with every sparsify node's threshold replaced."""
        nodes = []
        for n in self.nodes:
            attrs = dict(n.attrs)
            if n.kind == "sparsify":
                attrs["tp"] = float(tp)
            nodes.append(NodeSpec(n.id, n.kind, list(n.inputs), attrs))
        return ModelSpec(
            self.name, tuple(self.input_shape), nodes, self.output,
            list(self.aux_outputs), self.tile, self.input_id,
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "input": {"id": self.input_id, "shape": list(self.input_shape)},
            "tile": [self.tile.h, self.tile.w],
            "output": self.output,
            "nodes": [n.to_dict() for n in self.nodes],
        }
        if self.aux_outputs:
            d["aux_outputs"] = list(self.aux_outputs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        inp = d.get("input", {})
        tile = d.get("tile", list(TileShape().__dict__.values()))
        return cls(
            name=str(d.get("name", "model")),
            input_shape=tuple(int(v) for v in inp["shape"]),
            nodes=[NodeSpec.from_dict(nd) for nd in d["nodes"]],
            output=str(d["output"]),
            aux_outputs=[str(a) for a in d.get("aux_outputs", [])],
            tile=TileShape(int(tile[0]), int(tile[1])),
            input_id=str(inp.get("id", "input")),
        )

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def _node_out_shape(n: NodeSpec, ins: list[tuple[int, int, int]]) -> tuple[int, int, int]:
    kind = n.kind
    if kind == "conv":
        c, h, w = ins[0]
        kh, kw = (int(v) for v in n.attrs.get("kernel", [3, 3]))
        stride = int(n.attrs.get("stride", 1))
        padding = int(n.attrs.get("padding", 0))
        try:
            h_out, w_out = conv_output_hw(h, w, kh, kw, stride, padding)
        except ValueError as exc:
            raise ShapeError(f"node {n.id!r}: {exc}") from exc
        return (int(n.attrs["out_channels"]), h_out, w_out)
    if kind == "linear":
        return (int(n.attrs["out_features"]), 1, 1)
    if kind in ACTIVATION_KINDS or kind == "sparsify":
        return ins[0]
    if kind in ("add", "mul"):
        if ins[0] != ins[1]:
            raise ShapeError(f"node {n.id!r}: {kind} inputs disagree: {ins[0]} vs {ins[1]}")
        return ins[0]
    if kind == "concat":
        hw = ins[0][1:]
        for s in ins[1:]:
            if s[1:] != hw:
                raise ShapeError(f"node {n.id!r}: concat spatial mismatch: {s} vs {ins[0]}")
        return (sum(s[0] for s in ins), *hw)
    if kind == "upsample":
        c, h, w = ins[0]
        f = int(n.attrs.get("factor", 2))
        if f not in (2, 4):
            raise ShapeError(f"node {n.id!r}: upsample factor must be 2 or 4")
        return (c, h * f, w * f)
    if kind == "maxpool":
        c, h, w = ins[0]
        wh, ww = (int(v) for v in n.attrs.get("window", [2, 2]))
        stride = int(n.attrs.get("stride", 2))
        if wh > h or ww > w:
            raise ShapeError(f"node {n.id!r}: pool window {wh}x{ww} larger than input {h}x{w}")
        return (c, (h - wh) // stride + 1, (w - ww) // stride + 1)
    raise GraphError(f"node {n.id!r}: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@dataclass
class WeightManifest:
    """Named tensors at byte ranges inside a raw little-endian float32 blob."""

    blob_path: Path
    entries: list[dict]

    def to_dict(self) -> dict:
        return {"blob": self.blob_path.name, "tensors": self.entries}

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "WeightManifest":
        path = Path(path)
        d = yaml.safe_load(path.read_text())
        return cls(blob_path=path.parent / d["blob"], entries=list(d["tensors"]))

    def tensors(self) -> dict[str, np.ndarray]:
        blob = self.blob_path.read_bytes()
        out: dict[str, np.ndarray] = {}
        for e in self.entries:
            name = str(e["name"])
            if name in out:
                raise WeightError(f"weight {name!r} appears more than once in the manifest")
            shape = tuple(int(v) for v in e["shape"])
            offset, length = int(e["offset"]), int(e["length"])
            if length != int(np.prod(shape)) * 4:
                raise WeightError(f"weight {name!r}: length {length} does not match shape {shape}")
            if offset < 0 or offset + length > len(blob):
                raise WeightError(f"weight {name!r}: byte range [{offset}, {offset + length}) exceeds blob")
            out[name] = np.frombuffer(blob, dtype="<f4", count=length // 4, offset=offset).reshape(shape)
        return out

    @classmethod
    def generate(cls, spec: ModelSpec, seed: int, out_dir, stem: str = "weights") -> "WeightManifest":
        """Emit seeded random weights (He-scaled) for every tensor a spec needs."""
        rng = np.random.default_rng(seed)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        blob_path = out_dir / f"{stem}.bin"
        entries = []
        chunks = []
        offset = 0
        for name, shape in spec.weight_specs():
            if name.endswith(".bias"):
                arr = rng.uniform(-0.1, 0.1, size=shape).astype(np.float32)
            else:
                fan_in = int(np.prod(shape[1:]))
                arr = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32)
            data = arr.astype("<f4").tobytes()
            entries.append({"name": name, "shape": list(shape), "offset": offset, "length": len(data)})
            chunks.append(data)
            offset += len(data)
        blob_path.write_bytes(b"".join(chunks))
        manifest = cls(blob_path=blob_path, entries=entries)
        manifest.save(out_dir / f"{stem}.yaml")
        return manifest


# ---------------------------------------------------------------------------
# Compiled graph
# ---------------------------------------------------------------------------


@dataclass
class FlopReport:
    """Per-node (performed, dense_equiv) FLOP pairs plus mask sparsity observations."""

    per_node: dict[str, tuple[int, int]]
    false_tile_frac: dict[str, float] = field(default_factory=dict)

    @property
    def performed(self) -> int:
        return sum(p for p, _ in self.per_node.values())

    @property
    def dense_equiv(self) -> int:
        return sum(d for _, d in self.per_node.values())

    @property
    def reduction_pct(self) -> float:
        d = self.dense_equiv
        return 100.0 * (1.0 - self.performed / d) if d else 0.0


class _Node:
    __slots__ = (
        "spec", "kind", "out_shape", "weight", "bias", "conv_params", "fn",
        "acc", "acc2", "sp", "meter", "ff_last", "ff_sum", "ff_n",
    )

    def __init__(self, spec: NodeSpec, out_shape):
        self.spec = spec
        self.kind = spec.kind
        self.out_shape = out_shape
        self.weight = None
        self.bias = None
        self.conv_params = None
        self.fn = None
        self.acc = None
        self.acc2 = None
        self.sp = None
        self.meter = FlopCounter()
        self.ff_last = 0.0
        self.ff_sum = 0.0
        self.ff_n = 0


class Graph:
    """Compiled inference session; owns all mutable per-node state.

    One Graph is one session: it must not be shared across threads, but
    independent graphs over the same (immutable) weights may run in
    parallel.
    """

    def __init__(self, spec: ModelSpec, weights, refresh_interval: int = DEFAULT_REFRESH_INTERVAL):
        self.spec = spec
        self.tile = spec.tile
        self.input_id = spec.input_id
        self.input_shape = tuple(spec.input_shape)
        self.output_ids = [spec.output, *spec.aux_outputs]
        self.refresh_interval = int(refresh_interval) if refresh_interval else 0
        self.shapes = spec.infer_shapes()
        order = spec.topo_order()
        if isinstance(weights, WeightManifest):
            weights = weights.tensors()
        weights = dict(weights or {})
        self.nodes: list[_Node] = []
        for ns in order:
            node = _Node(ns, self.shapes[ns.id])
            self._bind(node, weights)
            self.nodes.append(node)
        self._by_id = {n.spec.id: n for n in self.nodes}
        self.step_count = 0
        self.refresh_due = False
        self._initialized = False
        self._baseline: dict[str, np.ndarray] = {}
        self._y_run: dict[str, np.ndarray] = {}

    # -- construction -------------------------------------------------------

    def _bind(self, node: _Node, weights: dict[str, np.ndarray]) -> None:
        ns = node.spec
        in_shape = self.shapes[ns.inputs[0]] if ns.inputs else None
        if ns.kind == "conv":
            kh, kw = (int(v) for v in ns.attrs.get("kernel", [3, 3]))
            params = ConvParams(
                (kh, kw), in_shape[0], int(ns.attrs["out_channels"]),
                int(ns.attrs.get("stride", 1)), int(ns.attrs.get("padding", 0)),
            )
            node.conv_params = params
            node.weight = self._take(weights, f"{ns.id}.weight", (params.c_out, params.c_in, kh, kw))
            node.bias = self._take(weights, f"{ns.id}.bias", (params.c_out,), required=False)
        elif ns.kind == "linear":
            f = int(ns.attrs["out_features"])
            length = int(np.prod(in_shape))
            node.weight = self._take(weights, f"{ns.id}.weight", (f, length))
            node.bias = self._take(weights, f"{ns.id}.bias", (f,), required=False)
        elif ns.kind in ACTIVATION_KINDS:
            node.fn = resolve_activation(ns.kind, float(ns.attrs.get("alpha", 0.01)))
            node.acc = AccState.zeros(in_shape)
        elif ns.kind == "mul":
            node.acc = AccState.zeros(self.shapes[ns.inputs[0]])
            node.acc2 = AccState.zeros(self.shapes[ns.inputs[1]])
        elif ns.kind == "maxpool":
            node.acc = AccState.zeros(in_shape)
        elif ns.kind == "sparsify":
            node.sp = SparsifyState(
                in_shape,
                tp=float(ns.attrs.get("tp", 0.0)),
                ema_decay=float(ns.attrs.get("ema_decay", 0.9)),
            )

    @staticmethod
    def _take(weights, name, shape, required: bool = True):
        arr = weights.get(name)
        if arr is None:
            if required:
                raise WeightError(f"missing weight {name!r}")
            return None
        arr = np.asarray(arr, dtype=np.float32)
        if arr.shape != tuple(shape):
            raise WeightError(f"weight {name!r} has shape {arr.shape}, expected {tuple(shape)}")
        return arr

    # -- dense evaluation ----------------------------------------------------

    def _eval_dense(self, x: np.ndarray, mutate: bool) -> dict[str, np.ndarray]:
        x = as_tensor(x)
        if x.shape != self.input_shape:
            raise ShapeError(f"input shape {x.shape}, graph expects {self.input_shape}")
        vals = {self.input_id: x}
        for node in self.nodes:
            ns = node.spec
            ins = [vals[i] for i in ns.inputs]
            kind = node.kind
            if kind == "conv":
                p = node.conv_params
                y = dense_conv2d(ins[0], node.weight, node.bias, p.stride, p.padding)
                if mutate:
                    de = 2 * p.kernel[0] * p.kernel[1] * p.c_in * p.c_out * y.shape[1] * y.shape[2]
                    node.meter.add(de, de)
            elif kind == "linear":
                y = dense_linear(ins[0].reshape(-1), node.weight, node.bias).reshape(node.out_shape)
                if mutate:
                    de = 2 * node.weight.shape[0] * node.weight.shape[1]
                    node.meter.add(de, de)
            elif kind in ACTIVATION_KINDS:
                y = node.fn(ins[0])
                if mutate:
                    node.acc.set_dense(ins[0])
            elif kind == "sparsify":
                y = ins[0]
                if mutate:
                    node.sp.reset(ins[0])
            elif kind == "add":
                y = ins[0] + ins[1]
            elif kind == "mul":
                y = ins[0] * ins[1]
                if mutate:
                    node.acc.set_dense(ins[0])
                    node.acc2.set_dense(ins[1])
            elif kind == "concat":
                y = np.concatenate(ins, axis=0)
            elif kind == "upsample":
                y = dense_upsample(ins[0], int(ns.attrs.get("factor", 2)), ns.attrs.get("mode", "nearest"))
            elif kind == "maxpool":
                wh, ww = (int(v) for v in ns.attrs.get("window", [2, 2]))
                y = dense_maxpool(ins[0], (wh, ww), int(ns.attrs.get("stride", 2)))
                if mutate:
                    node.acc.set_dense(ins[0])
            else:
                raise GraphError(f"unhandled node kind {kind!r}")
            vals[ns.id] = y
        return vals

    def dense_oracle(self, x: np.ndarray) -> np.ndarray:
        """Pure dense forward of the primary output; touches no session state."""
        return self._eval_dense(x, mutate=False)[self.output_ids[0]]

    def dense_pass(self, x: np.ndarray) -> np.ndarray:
        """Full dense forward that re-seeds every accumulator and baseline."""
        vals = self._eval_dense(x, mutate=True)
        for oid in self.output_ids:
            self._baseline[oid] = vals[oid].copy()
            self._y_run[oid] = vals[oid].copy()
        self.step_count = 0
        self.refresh_due = False
        self._initialized = True
        return vals[self.output_ids[0]]

    def refresh(self, x: np.ndarray) -> np.ndarray:
        """Dense reconstruction run; identical contract to dense_pass."""
        return self.dense_pass(x)

    # -- incremental evaluation ----------------------------------------------

    def incr_step(self, x_up: IncrementTensor):
        """Propagate one input increment; returns (y_up, integrated y, step report)."""
        if not self._initialized:
            raise GraphError("incr_step called before any dense_pass")
        if x_up.shape != self.input_shape:
            raise ShapeError(f"increment shape {x_up.shape}, graph expects {self.input_shape}")
        if x_up.tile != self.tile:
            raise ShapeError(f"increment tile {x_up.tile} does not match graph tile {self.tile}")
        before = {n.spec.id: n.meter.snapshot() for n in self.nodes}
        vals: dict[str, IncrementTensor] = {self.input_id: x_up}
        for node in self.nodes:
            ns = node.spec
            ins = [vals[i] for i in ns.inputs]
            kind = node.kind
            if kind == "conv":
                self._observe_sparsity(node, ins[0])
                y = inc_conv2d(ins[0], node.weight, node.conv_params, node.meter)
            elif kind == "linear":
                self._observe_sparsity(node, ins[0])
                flat = inc_linear(flatten_increment(ins[0]), node.weight, node.meter)
                y = IncrementTensor(
                    flat.values.reshape(node.out_shape),
                    all_true_mask(node.out_shape, self.tile),
                )
            elif kind in ACTIVATION_KINDS:
                y = inc_activation(ins[0], node.acc, node.fn)
            elif kind == "sparsify":
                y = sparsify_step(ins[0], node.sp)
            elif kind == "add":
                y = inc_add(ins[0], ins[1])
            elif kind == "mul":
                y = inc_mul(ins[0], ins[1], node.acc, node.acc2)
            elif kind == "concat":
                y = inc_concat(ins)
            elif kind == "upsample":
                y = inc_upsample(ins[0], int(ns.attrs.get("factor", 2)), ns.attrs.get("mode", "nearest"))
            elif kind == "maxpool":
                wh, ww = (int(v) for v in ns.attrs.get("window", [2, 2]))
                y = inc_maxpool(ins[0], node.acc, (wh, ww), int(ns.attrs.get("stride", 2)))
            else:
                raise GraphError(f"unhandled node kind {kind!r}")
            vals[ns.id] = y
        for oid in self.output_ids:
            self._y_run[oid] = integrate(self._y_run[oid], vals[oid])
        self.step_count += 1
        if self.refresh_interval:
            self.refresh_due = self.step_count >= self.refresh_interval
        report = FlopReport(
            per_node={
                nid: (n.meter.performed - before[nid][0], n.meter.dense_equiv - before[nid][1])
                for nid, n in self._by_id.items()
                if n.kind in ("conv", "linear")
            },
            false_tile_frac={
                n.spec.id: n.ff_last for n in self.nodes if n.kind in ("conv", "linear")
            },
        )
        return vals[self.output_ids[0]], self._y_run[self.output_ids[0]].copy(), report

    @staticmethod
    def _observe_sparsity(node: _Node, x: IncrementTensor) -> None:
        node.ff_last = x.mask.false_fraction()
        node.ff_sum += node.ff_last
        node.ff_n += 1

    # -- reporting -----------------------------------------------------------

    def integrated_output(self, output_id: str | None = None) -> np.ndarray:
        oid = output_id or self.output_ids[0]
        if oid not in self._y_run:
            raise GraphError("no output available before a dense_pass")
        return self._y_run[oid].copy()

    def drift(self, oracle_y: np.ndarray) -> float:
        """Max-absolute deviation of the integrated output from a dense oracle output."""
        oracle_y = as_tensor(oracle_y)
        y = self._y_run.get(self.output_ids[0])
        if y is None:
            raise GraphError("drift requested before any dense_pass")
        if y.shape != oracle_y.shape:
            raise ShapeError(f"oracle shape {oracle_y.shape}, output is {y.shape}")
        return float(np.max(np.abs(y - oracle_y))) if y.size else 0.0

    def flop_report(self) -> FlopReport:
        """Cumulative counters since build or the last reset_meters()."""
        return FlopReport(
            per_node={
                n.spec.id: n.meter.snapshot()
                for n in self.nodes
                if n.kind in ("conv", "linear")
            },
            false_tile_frac={
                n.spec.id: (n.ff_sum / n.ff_n if n.ff_n else 0.0)
                for n in self.nodes
                if n.kind in ("conv", "linear")
            },
        )

    def reset_meters(self) -> None:
        for n in self.nodes:
            n.meter.reset()
            n.ff_last = 0.0
            n.ff_sum = 0.0
            n.ff_n = 0

    def state_fingerprint(self) -> dict[str, np.ndarray]:
        """Copies of all mutable numeric state, keyed for equality checks in tests."""
        out: dict[str, np.ndarray] = {}
        for n in self.nodes:
            if n.acc is not None:
                out[f"{n.spec.id}.acc"] = n.acc.x_acc.copy()
            if n.acc2 is not None:
                out[f"{n.spec.id}.acc2"] = n.acc2.x_acc.copy()
            if n.sp is not None:
                out[f"{n.spec.id}.delta"] = n.sp.delta.copy()
                out[f"{n.spec.id}.norm"] = np.asarray([n.sp.norm_ema, n.sp.k], dtype=np.float64)
        for oid in self.output_ids:
            if oid in self._y_run:
                out[f"{oid}.y_run"] = self._y_run[oid].copy()
                out[f"{oid}.baseline"] = self._baseline[oid].copy()
        return out


def build(spec: ModelSpec, weights, refresh_interval: int = DEFAULT_REFRESH_INTERVAL) -> Graph:
    """Compile a ModelSpec against resolved weights into an inference session."""
    return Graph(spec, weights, refresh_interval)
