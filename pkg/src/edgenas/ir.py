"""Typed IR for linear feed-forward convolutional models.

A model is a named chain of layers applied to an H x W x C input tensor.
Shape inference uses "same" padding everywhere: spatial output = ceil(in /
stride). MAC and parameter counts cover weight tensors only; biases and
batch-norm parameters are excluded, and activations are free (ReLU assumed).

The op set is closed on purpose: anything outside it (swish, squeeze-excite,
...) is rejected at validation with an ``unsupported_op`` violation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from typing import ClassVar, Union


class ShapeError(ValueError):
    """A layer cannot be applied to its inferred input shape."""


class ModelValidationError(ValueError):
    """Raised when a graph (or its serialized form) fails validation."""

    def __init__(self, violations: list["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations) or "invalid model")


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    layer: int | None = None


@dataclass(frozen=True)
class TensorShape:
    h: int
    w: int
    c: int

    def __post_init__(self):
        for name in ("h", "w", "c"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"TensorShape.{name} must be a positive integer, got {v!r}")

    @property
    def elems(self) -> int:
        return self.h * self.w * self.c


_CONV_KERNELS = (1, 3, 5)
_DW_KERNELS = (3, 5)
_STRIDES = (1, 2)
_EXPANSIONS = (1, 3, 6)


def _check_domain(layer, name: str, allowed: tuple[int, ...]) -> None:
    v = getattr(layer, name)
    if v not in allowed:
        raise ValueError(f"{type(layer).__name__}.{name} must be one of {allowed}, got {v!r}")


def _check_positive(layer, name: str) -> None:
    v = getattr(layer, name)
    if not isinstance(v, int) or v < 1:
        raise ValueError(f"{type(layer).__name__}.{name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class Conv2D:
    op: ClassVar[str] = "conv2d"
    kernel: int
    stride: int
    out_channels: int

    def __post_init__(self):
        _check_domain(self, "kernel", _CONV_KERNELS)
        _check_domain(self, "stride", _STRIDES)
        _check_positive(self, "out_channels")


@dataclass(frozen=True)
class DepthwiseConv:
    op: ClassVar[str] = "dwconv"
    kernel: int
    stride: int

    def __post_init__(self):
        _check_domain(self, "kernel", _DW_KERNELS)
        _check_domain(self, "stride", _STRIDES)


@dataclass(frozen=True)
class IBNBlock:
    """Inverted bottleneck: 1x1 expand -> k x k depthwise -> 1x1 project.

    The expansion conv is always present, including expansion == 1.
    """

    op: ClassVar[str] = "ibn"
    kernel: int
    stride: int
    expansion: int
    out_channels: int
    residual: bool = False

    def __post_init__(self):
        _check_domain(self, "kernel", _DW_KERNELS)
        _check_domain(self, "stride", _STRIDES)
        _check_domain(self, "expansion", _EXPANSIONS)
        _check_positive(self, "out_channels")


@dataclass(frozen=True)
class FusedIBNBlock:
    """IBN with expand and depthwise fused into one full k x k convolution."""

    op: ClassVar[str] = "fused_ibn"
    kernel: int
    stride: int
    expansion: int
    out_channels: int
    residual: bool = False

    def __post_init__(self):
        _check_domain(self, "kernel", _DW_KERNELS)
        _check_domain(self, "stride", _STRIDES)
        _check_domain(self, "expansion", _EXPANSIONS)
        _check_positive(self, "out_channels")


@dataclass(frozen=True)
class GlobalAvgPool:
    op: ClassVar[str] = "gap"


@dataclass(frozen=True)
class Dense:
    op: ClassVar[str] = "dense"
    units: int

    def __post_init__(self):
        _check_positive(self, "units")


LayerSpec = Union[Conv2D, DepthwiseConv, IBNBlock, FusedIBNBlock, GlobalAvgPool, Dense]

LAYER_TYPES: dict[str, type] = {
    cls.op: cls for cls in (Conv2D, DepthwiseConv, IBNBlock, FusedIBNBlock, GlobalAvgPool, Dense)
}


@dataclass(frozen=True)
class ModelGraph:
    name: str
    input: TensorShape
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))


@dataclass(frozen=True)
class LayerCost:
    macs: int
    params: int


def _spatial_out(dim: int, stride: int) -> int:
    return -(dim // -stride)  # ceil(dim / stride), exact on ints


def output_shape(layer: LayerSpec, in_shape: TensorShape) -> TensorShape:
    """Shape of one layer's output under "same" padding.

    Raises ShapeError when the layer's structural constraints do not hold on
    this input (stride-2 on a dimension < 2, Dense on a non-1x1 feature map).
    """
    if isinstance(layer, (Conv2D, DepthwiseConv, IBNBlock, FusedIBNBlock)):
        if layer.stride == 2 and (in_shape.h < 2 or in_shape.w < 2):
            raise ShapeError(
                f"stride-2 {type(layer).__name__} needs height,width >= 2, got {in_shape.h}x{in_shape.w}"
            )
        h = _spatial_out(in_shape.h, layer.stride)
        w = _spatial_out(in_shape.w, layer.stride)
        if isinstance(layer, DepthwiseConv):
            return TensorShape(h, w, in_shape.c)
        return TensorShape(h, w, layer.out_channels)
    if isinstance(layer, GlobalAvgPool):
        return TensorShape(1, 1, in_shape.c)
    if isinstance(layer, Dense):
        if in_shape.h != 1 or in_shape.w != 1:
            raise ShapeError(f"Dense needs a 1x1 spatial input, got {in_shape.h}x{in_shape.w}")
        return TensorShape(1, 1, layer.units)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def infer_shapes(graph: ModelGraph) -> list[tuple[TensorShape, TensorShape]]:
    """Per-layer (input, output) shapes in graph order."""
    if not graph.layers:
        raise ShapeError("graph has no layers")
    out: list[tuple[TensorShape, TensorShape]] = []
    cur = graph.input
    for layer in graph.layers:
        nxt = output_shape(layer, cur)
        out.append((cur, nxt))
        cur = nxt
    return out


def iter_primitives(layer: LayerSpec, in_shape: TensorShape) -> list[tuple[LayerSpec, TensorShape, TensorShape]]:
    """Primitive (layer, input shape, output shape) triples a block executes
    serially.

    IBN and fused-IBN blocks decompose into plain convolutions plus the
    depthwise stage; primitive layers map to themselves. Cost models account
    blocks as the sum over this decomposition.
    """
    if isinstance(layer, IBNBlock):
        mid_c = layer.expansion * in_shape.c
        expand = Conv2D(kernel=1, stride=1, out_channels=mid_c)
        mid = output_shape(expand, in_shape)
        dw = DepthwiseConv(kernel=layer.kernel, stride=layer.stride)
        dw_out = output_shape(dw, mid)
        proj = Conv2D(kernel=1, stride=1, out_channels=layer.out_channels)
        return [(expand, in_shape, mid), (dw, mid, dw_out), (proj, dw_out, output_shape(proj, dw_out))]
    if isinstance(layer, FusedIBNBlock):
        mid_c = layer.expansion * in_shape.c
        fused = Conv2D(kernel=layer.kernel, stride=layer.stride, out_channels=mid_c)
        mid = output_shape(fused, in_shape)
        proj = Conv2D(kernel=1, stride=1, out_channels=layer.out_channels)
        return [(fused, in_shape, mid), (proj, mid, output_shape(proj, mid))]
    return [(layer, in_shape, output_shape(layer, in_shape))]


def sublayers(layer: LayerSpec, in_shape: TensorShape) -> list[tuple[LayerSpec, TensorShape]]:
    """Primitive (layer, input shape) pairs of a block's serialized execution."""
    return [(sub, s_in) for sub, s_in, _ in iter_primitives(layer, in_shape)]


def count_macs(layer: LayerSpec, in_shape: TensorShape) -> int:
    """Multiply-accumulates a layer performs on `in_shape` (bias-free)."""
    if isinstance(layer, (IBNBlock, FusedIBNBlock)):
        return sum(count_macs(sub, s) for sub, s in sublayers(layer, in_shape))
    out = output_shape(layer, in_shape)
    if isinstance(layer, Conv2D):
        return out.h * out.w * out.c * layer.kernel**2 * in_shape.c
    if isinstance(layer, DepthwiseConv):
        return out.h * out.w * in_shape.c * layer.kernel**2
    if isinstance(layer, Dense):
        return in_shape.c * layer.units
    if isinstance(layer, GlobalAvgPool):
        return 0
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def count_params(layer: LayerSpec, in_shape: TensorShape) -> int:
    """Weight-tensor element count (biases and batch norm excluded)."""
    if isinstance(layer, (IBNBlock, FusedIBNBlock)):
        return sum(count_params(sub, s) for sub, s in sublayers(layer, in_shape))
    if isinstance(layer, Conv2D):
        return layer.kernel**2 * in_shape.c * layer.out_channels
    if isinstance(layer, DepthwiseConv):
        return layer.kernel**2 * in_shape.c
    if isinstance(layer, Dense):
        return in_shape.c * layer.units
    if isinstance(layer, GlobalAvgPool):
        return 0
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def layer_cost(layer: LayerSpec, in_shape: TensorShape) -> LayerCost:
    return LayerCost(macs=count_macs(layer, in_shape), params=count_params(layer, in_shape))


def validate_with_shapes(
    graph: ModelGraph,
) -> tuple[list[Violation], list[tuple[TensorShape, TensorShape]] | None]:
    """One-pass validation returning (violations, per-layer shapes).

    Shapes are None when inference could not finish; callers that need both
    validation and shapes avoid walking the graph twice.
    """
    n = len(graph.layers)
    if n == 0:
        return [Violation("bad_graph", "graph has no layers")], None

    violations: list[Violation] = []
    for i, layer in enumerate(graph.layers):
        if isinstance(layer, Dense) and i != n - 1:
            violations.append(
                Violation("layer_position", f"dense allowed only as the final layer, found at {i}", i)
            )
        if isinstance(layer, GlobalAvgPool):
            last = i == n - 1
            before_dense = i == n - 2 and isinstance(graph.layers[i + 1], Dense)
            if not (last or before_dense):
                violations.append(
                    Violation(
                        "layer_position",
                        f"gap allowed only as the final layer or directly before a final dense, found at {i}",
                        i,
                    )
                )

    shapes: list[tuple[TensorShape, TensorShape]] = []
    cur = graph.input
    for i, layer in enumerate(graph.layers):
        try:
            nxt = output_shape(layer, cur)
        except ShapeError as e:
            violations.append(Violation("shape_error", f"layer {i}: {e}", i))
            return violations, None
        if isinstance(layer, (IBNBlock, FusedIBNBlock)) and layer.residual:
            if layer.stride != 1 or cur.c != layer.out_channels:
                violations.append(
                    Violation(
                        "residual_shape_mismatch",
                        f"layer {i}: residual needs stride 1 and in=out channels "
                        f"(stride={layer.stride}, {cur.c}->{layer.out_channels})",
                        i,
                    )
                )
        shapes.append((cur, nxt))
        cur = nxt
    return violations, shapes


def validate(graph: ModelGraph) -> list[Violation]:
    """Structural validation; an empty list means the graph is valid.

    Checks layer placement (GlobalAvgPool/Dense only at the tail), residual
    eligibility (stride 1 and matching channels), and whole-graph shape
    feasibility. Per-field domain errors cannot occur here: layer
    constructors reject them.
    """
    return validate_with_shapes(graph)[0]


def layer_names(graph: ModelGraph) -> list[str]:
    return [f"{layer.op}_{i}" for i, layer in enumerate(graph.layers)]


# --- canonical JSON serialization ---------------------------------------
#
# {"name": str, "input": {"h":..,"w":..,"c":..}, "layers":[{"op": ..., ...}]}
#
# Field names are normative; unknown fields are rejected at load time.

_WIRE_FIELDS: dict[str, dict[str, bool]] = {
    # field -> required
    "conv2d": {"kernel": True, "stride": True, "out_channels": True},
    "dwconv": {"kernel": True, "stride": True},
    "ibn": {"kernel": True, "stride": True, "expansion": True, "out_channels": True, "residual": False},
    "fused_ibn": {"kernel": True, "stride": True, "expansion": True, "out_channels": True, "residual": False},
    "gap": {},
    "dense": {"units": True},
}


def layer_to_dict(layer: LayerSpec) -> dict:
    d: dict = {"op": layer.op}
    for f in fields(layer):
        d[f.name] = getattr(layer, f.name)
    return d


def model_to_dict(graph: ModelGraph) -> dict:
    return {
        "name": graph.name,
        "input": {"h": graph.input.h, "w": graph.input.w, "c": graph.input.c},
        "layers": [layer_to_dict(layer) for layer in graph.layers],
    }


def model_to_json(graph: ModelGraph) -> str:
    return json.dumps(model_to_dict(graph), indent=2) + "\n"


def graph_hash(graph: ModelGraph) -> str:
    """Stable content hash of the canonical serialization."""
    canon = json.dumps(model_to_dict(graph), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _parse_layer(i: int, obj, violations: list[Violation]) -> LayerSpec | None:
    if not isinstance(obj, dict):
        violations.append(Violation("bad_field", f"layer {i}: expected an object", i))
        return None
    op = obj.get("op")
    if not isinstance(op, str) or op not in _WIRE_FIELDS:
        violations.append(Violation("unsupported_op", f"layer {i}: unsupported op {op!r}", i))
        return None
    spec = _WIRE_FIELDS[op]
    kwargs = {}
    ok = True
    for key, value in obj.items():
        if key == "op":
            continue
        if key not in spec:
            violations.append(Violation("unknown_field", f"layer {i}: unknown field {key!r} for op {op!r}", i))
            ok = False
            continue
        kwargs[key] = value
    for key, required in spec.items():
        if required and key not in kwargs:
            violations.append(Violation("missing_field", f"layer {i}: missing field {key!r} for op {op!r}", i))
            ok = False
    if not ok:
        return None
    try:
        return LAYER_TYPES[op](**kwargs)
    except (TypeError, ValueError) as e:
        violations.append(Violation("bad_field", f"layer {i}: {e}", i))
        return None


def model_from_dict(obj) -> ModelGraph:
    """Build a graph from its wire form.

    Collects all problems (unsupported ops, unknown/bad fields, structural
    violations) and raises one ModelValidationError carrying the full list.
    """
    violations: list[Violation] = []
    if not isinstance(obj, dict):
        raise ModelValidationError([Violation("bad_graph", "model must be a JSON object")])
    unknown_top = set(obj) - {"name", "input", "layers"}
    if unknown_top:
        violations.append(Violation("unknown_field", f"unknown model fields {sorted(unknown_top)}"))
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        violations.append(Violation("bad_field", "model name must be a non-empty string"))
        name = "?"
    inp = obj.get("input")
    shape = None
    if not isinstance(inp, dict) or set(inp) != {"h", "w", "c"}:
        violations.append(Violation("bad_field", 'model input must be {"h","w","c"}'))
    else:
        try:
            shape = TensorShape(inp["h"], inp["w"], inp["c"])
        except ValueError as e:
            violations.append(Violation("bad_field", f"model input: {e}"))
    raw_layers = obj.get("layers")
    layers: list[LayerSpec] = []
    if not isinstance(raw_layers, list) or not raw_layers:
        violations.append(Violation("bad_graph", "model layers must be a non-empty list"))
    else:
        for i, entry in enumerate(raw_layers):
            layer = _parse_layer(i, entry, violations)
            if layer is not None:
                layers.append(layer)
    if violations:
        raise ModelValidationError(violations)
    graph = ModelGraph(name=name, input=shape, layers=tuple(layers))
    structural = validate(graph)
    if structural:
        raise ModelValidationError(structural)
    return graph


def model_from_json(text: str) -> ModelGraph:
    """Parse wire JSON. Raises json.JSONDecodeError for malformed JSON and
    ModelValidationError for a well-formed but invalid model."""
    return model_from_dict(json.loads(text))


def load_model(path) -> ModelGraph:
    with open(path, "r", encoding="utf-8") as f:
        return model_from_json(f.read())


def save_model(graph: ModelGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(model_to_json(graph))
