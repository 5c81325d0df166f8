"""Backbone/head graph construction, parameter accounting, and execution.

The backbone is the canonical Inception-v3 layer catalog truncated at the
second grid-reduction block (endpoint ``mixed8``): stem, three 35x35-style
blocks (``mixed0..2``), a grid reduction (``mixed3``), four blocks with
1x7/7x1 factorized convolutions (``mixed4..7``), and the final reduction
(``mixed8``). Every convolution is a conv + shift-only batchnorm + relu
unit. The customized head is flatten -> dense(hidden, relu) -> dropout ->
dense(classes, softmax).

Exact parameter totals at 150x150x3 input are the arbiter that this catalog
is right: 22,475,427 total / 22,454,051 trainable / 21,376 non-trainable.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import ops
from .errors import GraphError, ShapeError
from .tensor import Tensor

INPUT_LAYER = "input"


@dataclass(frozen=True)
class WeightSpec:
    """One named weight tensor bound by a layer."""

    name: str
    shape: tuple
    trainable: bool  # False only for batchnorm moving statistics


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the computation graph; unused fields stay at defaults."""

    name: str
    kind: str  # input|conv|batchnorm|activation|pool|concat|flatten|dense|dropout
    inputs: tuple = ()
    section: str = "backbone"  # backbone|head
    filters: int = 0
    kernel: tuple = (0, 0)
    stride: int = 1
    padding: str = "valid"
    pool_mode: str = ""
    window: int = 0
    units: int = 0
    activation: str = ""
    rate: float = 0.0
    eps: float = 1e-3
    weights: tuple = field(default=())  # tuple[WeightSpec, ...]


@dataclass(frozen=True)
class ParamReport:
    """Element counts per trainability class, plus a per-layer breakdown."""

    total: int
    trainable: int
    non_trainable: int
    per_layer: tuple  # tuple[(layer name, total, trainable), ...]


@dataclass(frozen=True)
class GraphSpec:
    """Immutable DAG of layer specs with named endpoints."""

    layers: tuple  # tuple[LayerSpec, ...], topological order
    endpoint_items: tuple  # tuple[(endpoint name, layer name), ...]
    input_shape: tuple  # (H, W, C)
    shape_items: tuple  # tuple[(layer name, output shape), ...]

    @cached_property
    def endpoints(self):
        return dict(self.endpoint_items)

    @cached_property
    def output_shapes(self):
        """Per-layer output shape, batch dimension omitted."""
        return dict(self.shape_items)

    @cached_property
    def layer_map(self):
        return {l.name: l for l in self.layers}

    @property
    def has_head(self):
        return "dense_out" in self.endpoints

    def weight_specs(self):
        """All bound weights in topological order."""
        out = []
        for layer in self.layers:
            out.extend(layer.weights)
        return out

    def endpoint_shape(self, name):
        return self.output_shapes[self.endpoints[name]]

    def census(self):
        """Layer counts by kind.

        Depth claims for this architecture vary with the counting
        convention, so the raw per-kind tally is reported instead of a
        single number."""
        counts = {}
        for layer in self.layers:
            counts[layer.kind] = counts.get(layer.kind, 0) + 1
        return counts


class _Builder:
    """Mutable accumulator that emits a frozen GraphSpec."""

    def __init__(self, input_shape):
        h, w, c = input_shape
        if h < 1 or w < 1 or c < 1:
            raise GraphError(f"bad input shape {input_shape}")
        self.layers = [LayerSpec(name=INPUT_LAYER, kind="input")]
        self.shapes = {INPUT_LAYER: (h, w, c)}
        self.endpoints = {INPUT_LAYER: INPUT_LAYER}
        self.conv_idx = 0
        self.pool_idx = 0

    def _add(self, layer, out_shape):
        if layer.name in self.shapes:
            raise GraphError(f"duplicate layer name {layer.name!r}")
        self.layers.append(layer)
        self.shapes[layer.name] = out_shape
        return layer.name

    def conv_unit(self, src, filters, kernel, stride=1, padding="valid", section="backbone"):
        """conv -> batchnorm -> relu, the Inception-v3 convolution unit."""
        h, w, c = self.shapes[src]
        kh, kw = kernel
        oh = ops.conv_output_extent(h, kh, stride, padding)
        ow = ops.conv_output_extent(w, kw, stride, padding)
        i = self.conv_idx
        if oh <= 0 or ow <= 0:
            raise GraphError(
                f"input too small: layer conv_{i} ({kh}x{kw} stride {stride} {padding}) "
                f"would produce an empty {oh}x{ow} output from {h}x{w}"
            )
        self.conv_idx += 1
        conv = self._add(
            LayerSpec(
                name=f"conv_{i}",
                kind="conv",
                inputs=(src,),
                section=section,
                filters=filters,
                kernel=(kh, kw),
                stride=stride,
                padding=padding,
                weights=(WeightSpec(f"conv_{i}/kernel", (kh, kw, c, filters), True),),
            ),
            (oh, ow, filters),
        )
        bn = self._add(
            LayerSpec(
                name=f"bn_{i}",
                kind="batchnorm",
                inputs=(conv,),
                section=section,
                weights=(
                    WeightSpec(f"bn_{i}/beta", (filters,), True),
                    WeightSpec(f"bn_{i}/moving_mean", (filters,), False),
                    WeightSpec(f"bn_{i}/moving_var", (filters,), False),
                ),
            ),
            (oh, ow, filters),
        )
        return self._add(
            LayerSpec(name=f"relu_{i}", kind="activation", inputs=(bn,), section=section,
                      activation="relu"),
            (oh, ow, filters),
        )

    def pool(self, src, window, stride, mode, padding="valid"):
        h, w, c = self.shapes[src]
        name = f"pool_{self.pool_idx}"
        oh = ops.conv_output_extent(h, window, stride, padding)
        ow = ops.conv_output_extent(w, window, stride, padding)
        if oh <= 0 or ow <= 0:
            raise GraphError(
                f"input too small: layer {name} ({mode} {window}x{window} stride {stride}) "
                f"would produce an empty output from {h}x{w}"
            )
        self.pool_idx += 1
        return self._add(
            LayerSpec(name=name, kind="pool", inputs=(src,), pool_mode=mode,
                      window=window, stride=stride, padding=padding),
            (oh, ow, c),
        )

    def concat(self, srcs, name):
        shapes = [self.shapes[s] for s in srcs]
        base = shapes[0][:2]
        if any(s[:2] != base for s in shapes):
            raise GraphError(f"concat {name!r} inputs disagree on spatial size: {shapes}")
        channels = sum(s[2] for s in shapes)
        return self._add(
            LayerSpec(name=name, kind="concat", inputs=tuple(srcs)),
            (base[0], base[1], channels),
        )

    def finish(self, extra_endpoints):
        self.endpoints.update(extra_endpoints)
        return GraphSpec(
            layers=tuple(self.layers),
            endpoint_items=tuple(self.endpoints.items()),
            input_shape=self.shapes[INPUT_LAYER],
            shape_items=tuple(self.shapes.items()),
        )


def _inception_a(b, src, pool_width, endpoint):
    """35x35-style block: 1x1 / 5x5 / double-3x3 / pooled 1x1 branches."""
    b1 = b.conv_unit(src, 64, (1, 1), padding="same")
    b5 = b.conv_unit(src, 48, (1, 1), padding="same")
    b5 = b.conv_unit(b5, 64, (5, 5), padding="same")
    b3 = b.conv_unit(src, 64, (1, 1), padding="same")
    b3 = b.conv_unit(b3, 96, (3, 3), padding="same")
    b3 = b.conv_unit(b3, 96, (3, 3), padding="same")
    bp = b.pool(src, 3, 1, "avg", padding="same")
    bp = b.conv_unit(bp, pool_width, (1, 1), padding="same")
    return b.concat([b1, b5, b3, bp], endpoint)


def _reduction_a(b, src, endpoint):
    """Grid reduction to half resolution: strided 3x3 / double-3x3 / maxpool."""
    b3 = b.conv_unit(src, 384, (3, 3), stride=2, padding="valid")
    bd = b.conv_unit(src, 64, (1, 1), padding="same")
    bd = b.conv_unit(bd, 96, (3, 3), padding="same")
    bd = b.conv_unit(bd, 96, (3, 3), stride=2, padding="valid")
    bp = b.pool(src, 3, 2, "max", padding="valid")
    return b.concat([b3, bd, bp], endpoint)


def _inception_b(b, src, width, endpoint):
    """17x17-style block with 1x7/7x1 factorized convolutions."""
    b1 = b.conv_unit(src, 192, (1, 1), padding="same")
    b7 = b.conv_unit(src, width, (1, 1), padding="same")
    b7 = b.conv_unit(b7, width, (1, 7), padding="same")
    b7 = b.conv_unit(b7, 192, (7, 1), padding="same")
    bd = b.conv_unit(src, width, (1, 1), padding="same")
    bd = b.conv_unit(bd, width, (7, 1), padding="same")
    bd = b.conv_unit(bd, width, (1, 7), padding="same")
    bd = b.conv_unit(bd, width, (7, 1), padding="same")
    bd = b.conv_unit(bd, 192, (1, 7), padding="same")
    bp = b.pool(src, 3, 1, "avg", padding="same")
    bp = b.conv_unit(bp, 192, (1, 1), padding="same")
    return b.concat([b1, b7, bd, bp], endpoint)


def _reduction_b(b, src, endpoint):
    """Final reduction feeding the head: strided 3x3 / factorized 7x7 / maxpool."""
    b3 = b.conv_unit(src, 192, (1, 1), padding="same")
    b3 = b.conv_unit(b3, 320, (3, 3), stride=2, padding="valid")
    b7 = b.conv_unit(src, 192, (1, 1), padding="same")
    b7 = b.conv_unit(b7, 192, (1, 7), padding="same")
    b7 = b.conv_unit(b7, 192, (7, 1), padding="same")
    b7 = b.conv_unit(b7, 192, (3, 3), stride=2, padding="valid")
    bp = b.pool(src, 3, 2, "max", padding="valid")
    return b.concat([b3, b7, bp], endpoint)


def build_backbone(input_size):
    """Backbone graph from the input plane to the mixed8 endpoint.

    ``input_size`` is a square extent or an (H, W) pair; three input
    channels are implied. Raises GraphError naming the first layer that
    would produce an empty output (inputs below 75x75 cannot reach mixed8).
    """
    if isinstance(input_size, int):
        h = w = input_size
    else:
        h, w = input_size
    b = _Builder((h, w, 3))

    net = b.conv_unit(INPUT_LAYER, 32, (3, 3), stride=2, padding="valid")
    net = b.conv_unit(net, 32, (3, 3), padding="valid")
    net = b.conv_unit(net, 64, (3, 3), padding="same")
    net = b.pool(net, 3, 2, "max", padding="valid")
    net = b.conv_unit(net, 80, (1, 1), padding="valid")
    net = b.conv_unit(net, 192, (3, 3), padding="valid")
    net = b.pool(net, 3, 2, "max", padding="valid")

    net = _inception_a(b, net, 32, "mixed0")
    net = _inception_a(b, net, 64, "mixed1")
    net = _inception_a(b, net, 64, "mixed2")
    net = _reduction_a(b, net, "mixed3")
    net = _inception_b(b, net, 128, "mixed4")
    net = _inception_b(b, net, 160, "mixed5")
    net = _inception_b(b, net, 160, "mixed6")
    net = _inception_b(b, net, 192, "mixed7")
    net = _reduction_b(b, net, "mixed8")

    return b.finish({name: name for name in
                     ("mixed0", "mixed1", "mixed2", "mixed3", "mixed4",
                      "mixed5", "mixed6", "mixed7", "mixed8")})


def attach_head(g, hidden=1024, dropout_rate=0.5, classes=3):
    """Append flatten -> dense(hidden, relu) -> dropout -> dense(classes, softmax)."""
    if g.has_head:
        raise GraphError("head already attached")
    if "mixed8" not in g.endpoints:
        raise GraphError("graph has no mixed8 endpoint to attach the head to")
    if not 0.0 <= dropout_rate < 1.0:
        raise GraphError(f"dropout rate must be in [0, 1), got {dropout_rate!r}")

    src = g.endpoints["mixed8"]
    h, w, c = dict(g.shape_items)[src]
    width = h * w * c
    layers = list(g.layers)
    shapes = list(g.shape_items)

    def add(layer, shape):
        layers.append(layer)
        shapes.append((layer.name, shape))

    add(LayerSpec(name="flatten", kind="flatten", inputs=(src,), section="head"), (width,))
    add(
        LayerSpec(
            name="dense_0", kind="dense", inputs=("flatten",), section="head",
            units=hidden, activation="relu",
            weights=(
                WeightSpec("dense_0/kernel", (width, hidden), True),
                WeightSpec("dense_0/bias", (hidden,), True),
            ),
        ),
        (hidden,),
    )
    add(LayerSpec(name="dropout", kind="dropout", inputs=("dense_0",), section="head",
                  rate=dropout_rate), (hidden,))
    add(
        LayerSpec(
            name="dense_1", kind="dense", inputs=("dropout",), section="head",
            units=classes, activation="softmax",
            weights=(
                WeightSpec("dense_1/kernel", (hidden, classes), True),
                WeightSpec("dense_1/bias", (classes,), True),
            ),
        ),
        (classes,),
    )

    endpoints = dict(g.endpoint_items)
    endpoints.update({"flatten": "flatten", "dense_hidden": "dense_0",
                      "dropout": "dropout", "dense_out": "dense_1"})
    return GraphSpec(
        layers=tuple(layers),
        endpoint_items=tuple(endpoints.items()),
        input_shape=g.input_shape,
        shape_items=tuple(shapes),
    )


def build_model(input_size, hidden=1024, dropout_rate=0.5, classes=3):
    """Backbone plus head in one call."""
    return attach_head(build_backbone(input_size), hidden, dropout_rate, classes)


TRAINABLE_POLICIES = ("full_finetune", "head_only")


def trainable_names(g, policy="full_finetune"):
    """Weight names the optimizer may update under the given policy."""
    if policy not in TRAINABLE_POLICIES:
        raise GraphError(f"unknown trainable policy {policy!r}")
    names = set()
    for layer in g.layers:
        for ws in layer.weights:
            if ws.trainable and (policy == "full_finetune" or layer.section == "head"):
                names.add(ws.name)
    return names


def param_report(g, policy="full_finetune"):
    """Count weight elements per layer and per trainability class."""
    trainable_set = trainable_names(g, policy)
    rows = []
    total = trainable = 0
    for layer in g.layers:
        lt = ltr = 0
        for ws in layer.weights:
            count = int(np.prod(ws.shape))
            lt += count
            if ws.name in trainable_set:
                ltr += count
        if layer.weights:
            rows.append((layer.name, lt, ltr))
        total += lt
        trainable += ltr
    return ParamReport(total=total, trainable=trainable,
                       non_trainable=total - trainable, per_layer=tuple(rows))


def forward(g, weights, batch, training=False, rng=None, endpoint=None):
    """Run the graph on an NHWC batch; returns the endpoint tensor.

    ``weights`` maps weight name to Tensor or ndarray (a WeightStore works).
    The training flag only affects dropout; ``rng`` is required when it
    matters. ``endpoint`` defaults to the last layer.
    """
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=np.float32))
    if x.data.ndim != 4:
        raise ShapeError(f"batch must be NHWC rank-4, got {tuple(x.shape)}")
    if tuple(x.shape[1:]) != tuple(g.input_shape):
        raise ShapeError(
            f"batch shape {tuple(x.shape[1:])} does not match graph input {tuple(g.input_shape)}"
        )

    target = g.endpoints[endpoint] if endpoint else g.layers[-1].name
    wcache = {}

    def weight(name):
        t = wcache.get(name)
        if t is None:
            try:
                raw = weights[name]
            except KeyError:
                raise GraphError(f"missing weight {name!r}") from None
            t = raw if isinstance(raw, Tensor) else Tensor(raw)
            wcache[name] = t
        return t

    # Free each intermediate as soon as its last consumer has run.
    remaining = {}
    for layer in g.layers:
        for src in layer.inputs:
            remaining[src] = remaining.get(src, 0) + 1

    values = {}
    out = None
    for layer in g.layers:
        if layer.kind == "input":
            values[layer.name] = x
        else:
            srcs = [values[s] for s in layer.inputs]
            if layer.kind == "conv":
                y = ops.conv2d(srcs[0], weight(f"{layer.name}/kernel"),
                               stride=layer.stride, padding=layer.padding)
            elif layer.kind == "batchnorm":
                y = ops.batchnorm(srcs[0], weight(f"{layer.name}/beta"),
                                  weight(f"{layer.name}/moving_mean"),
                                  weight(f"{layer.name}/moving_var"), eps=layer.eps)
            elif layer.kind == "activation":
                y = ops.activation(srcs[0], layer.activation)
            elif layer.kind == "pool":
                y = ops.pool2d(srcs[0], layer.window, layer.stride, layer.pool_mode,
                               layer.padding)
            elif layer.kind == "concat":
                y = ops.concat_channels(srcs)
            elif layer.kind == "flatten":
                y = ops.flatten(srcs[0])
            elif layer.kind == "dense":
                y = ops.dense(srcs[0], weight(f"{layer.name}/kernel"),
                              weight(f"{layer.name}/bias"))
                if layer.activation:
                    y = ops.activation(y, layer.activation)
            elif layer.kind == "dropout":
                y = ops.dropout(srcs[0], layer.rate, training, rng)
            else:
                raise GraphError(f"unknown layer kind {layer.kind!r}")
            values[layer.name] = y

        for src in layer.inputs:
            remaining[src] -= 1
            if remaining[src] == 0 and src != target:
                del values[src]
        if layer.name == target:
            out = values[layer.name]
            break
    return out


def init_random(g, seed=0):
    """Glorot-uniform kernels, zero biases/betas/means, unit variances.

    Deterministic per seed; draws happen in weight-spec order. Returns a
    WeightStore covering exactly the graph's bindings.
    """
    from .weights_io import WeightStore

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    store = WeightStore()
    for ws in g.weight_specs():
        kind = ws.name.rsplit("/", 1)[1]
        if kind == "kernel":
            shape = ws.shape
            if len(shape) == 4:
                rf = shape[0] * shape[1]
                fan_in, fan_out = rf * shape[2], rf * shape[3]
            else:
                fan_in, fan_out = shape[0], shape[1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, shape).astype(np.float32)
        elif kind == "moving_var":
            data = np.ones(ws.shape, dtype=np.float32)
        else:  # bias, beta, moving_mean
            data = np.zeros(ws.shape, dtype=np.float32)
        store.add(ws.name, data, trainable=ws.trainable)
    return store
