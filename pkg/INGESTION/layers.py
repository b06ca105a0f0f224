import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

Shape = Tuple[int, ...]


class ModelFormatError(ValueError):
    """Raised when a model document or a LayeredModel breaks the format invariants."""


class LayerKind(str, Enum):
    DENSE = "dense"
    CONV2D = "conv2d"
    AVGPOOL = "avgpool"
    MAXPOOL = "maxpool"
    RELU = "relu"


WEIGHTED_KINDS = (LayerKind.DENSE, LayerKind.CONV2D)
POOL_KINDS = (LayerKind.AVGPOOL, LayerKind.MAXPOOL)


@dataclass(eq=False)
class LayerSpec:
    """
    One layer of a feed-forward model.

    Dense weights are stored input-major (index = i * out_dim + j), conv2d
    weights as [k_h][k_w][in_c][out_c] row-major. Pool layers use valid padding.
    """
    kind: LayerKind
    in_dim: Optional[int] = None
    out_dim: Optional[int] = None
    in_h: Optional[int] = None
    in_w: Optional[int] = None
    in_c: Optional[int] = None
    out_c: Optional[int] = None
    k_h: Optional[int] = None
    k_w: Optional[int] = None
    stride: Optional[int] = None
    padding: Optional[str] = None
    window: Optional[int] = None
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    bias: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.kind = LayerKind(self.kind)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).ravel()

    @property
    def is_weighted(self) -> bool:
        return self.kind in WEIGHTED_KINDS

    def weight_matrix(self) -> np.ndarray:
        """Weights reshaped for computation: (in, out) for dense, (kh, kw, in_c, out_c) for conv2d."""
        if self.kind == LayerKind.DENSE:
            return self.weights.reshape(self.in_dim, self.out_dim)
        if self.kind == LayerKind.CONV2D:
            return self.weights.reshape(self.k_h, self.k_w, self.in_c, self.out_c)
        raise ModelFormatError(f"{self.kind.value} layer has no weights")

    def expected_weight_count(self) -> int:
        if self.kind == LayerKind.DENSE:
            return self.in_dim * self.out_dim
        return self.k_h * self.k_w * self.in_c * self.out_c

    def expected_bias_count(self) -> int:
        return self.out_dim if self.kind == LayerKind.DENSE else self.out_c

    def with_params(self, weights: np.ndarray, bias: np.ndarray) -> "LayerSpec":
        return replace(self, weights=np.array(weights, dtype=np.float64), bias=np.array(bias, dtype=np.float64))

    def copy(self) -> "LayerSpec":
        return replace(
            self,
            weights=None if self.weights is None else self.weights.copy(),
            bias=None if self.bias is None else self.bias.copy(),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayerSpec):
            return NotImplemented
        for name in ("kind", "in_dim", "out_dim", "in_h", "in_w", "in_c", "out_c",
                     "k_h", "k_w", "stride", "padding", "window"):
            if getattr(self, name) != getattr(other, name):
                return False
        return _arrays_equal(self.weights, other.weights) and _arrays_equal(self.bias, other.bias)


def _arrays_equal(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.array_equal(a, b))


def conv_output_hw(in_h: int, in_w: int, k_h: int, k_w: int, stride: int, padding: str) -> Tuple[int, int]:
    if padding == "same":
        return -(-in_h // stride), -(-in_w // stride)
    return (in_h - k_h) // stride + 1, (in_w - k_w) // stride + 1


def output_shape(layer: LayerSpec, in_shape: Shape) -> Shape:
    """Output shape of `layer` for input of `in_shape`; flat shapes are (n,), images (h, w, c)."""
    if layer.kind == LayerKind.DENSE:
        return (layer.out_dim,)
    if layer.kind == LayerKind.CONV2D:
        out_h, out_w = conv_output_hw(layer.in_h, layer.in_w, layer.k_h, layer.k_w, layer.stride, layer.padding)
        return (out_h, out_w, layer.out_c)
    if layer.kind in POOL_KINDS:
        h, w, c = in_shape
        return ((h - layer.window) // layer.stride + 1, (w - layer.window) // layer.stride + 1, c)
    return tuple(in_shape)


def check_layer(index: int, layer: LayerSpec, in_shape: Shape) -> None:
    """Validate one layer against its incoming shape, raising ModelFormatError naming the layer index."""
    kind = layer.kind
    if kind in WEIGHTED_KINDS:
        if layer.weights is None or layer.bias is None:
            raise ModelFormatError(f"layer {index} ({kind.value}): weights and bias are required")
        if kind == LayerKind.DENSE:
            flat = int(np.prod(in_shape))
            if layer.in_dim != flat:
                raise ModelFormatError(
                    f"layer {index} (dense): in_dim {layer.in_dim} does not match incoming shape {tuple(in_shape)}"
                )
        else:
            if layer.stride is None or layer.stride < 1:
                raise ModelFormatError(f"layer {index} (conv2d): stride must be >= 1")
            if layer.padding not in ("valid", "same"):
                raise ModelFormatError(f"layer {index} (conv2d): padding must be 'valid' or 'same'")
            if len(in_shape) != 3 or (layer.in_h, layer.in_w, layer.in_c) != tuple(in_shape):
                raise ModelFormatError(
                    f"layer {index} (conv2d): input shape {(layer.in_h, layer.in_w, layer.in_c)} "
                    f"does not match incoming shape {tuple(in_shape)}"
                )
            out_h, out_w = conv_output_hw(layer.in_h, layer.in_w, layer.k_h, layer.k_w, layer.stride, layer.padding)
            if out_h < 1 or out_w < 1:
                raise ModelFormatError(f"layer {index} (conv2d): kernel larger than input")
        if layer.weights.size != layer.expected_weight_count():
            raise ModelFormatError(
                f"layer {index} ({kind.value}): expected {layer.expected_weight_count()} weights, "
                f"got {layer.weights.size}"
            )
        if layer.bias.size != layer.expected_bias_count():
            raise ModelFormatError(
                f"layer {index} ({kind.value}): expected {layer.expected_bias_count()} biases, got {layer.bias.size}"
            )
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
            raise ModelFormatError(f"layer {index} ({kind.value}): weights and biases must be finite")
    elif kind in POOL_KINDS:
        if layer.window is None or layer.window < 1:
            raise ModelFormatError(f"layer {index} ({kind.value}): window must be >= 1")
        if layer.stride is None or layer.stride < 1:
            raise ModelFormatError(f"layer {index} ({kind.value}): stride must be >= 1")
        if len(in_shape) != 3:
            raise ModelFormatError(f"layer {index} ({kind.value}): needs an (h, w, c) input, got {tuple(in_shape)}")
        if layer.window > in_shape[0] or layer.window > in_shape[1]:
            raise ModelFormatError(f"layer {index} ({kind.value}): window larger than input {tuple(in_shape)}")


@dataclass(eq=False)
class LayeredModel:
    input_shape: Shape
    layers: List[LayerSpec]
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)

    def validate(self) -> "LayeredModel":
        if self.format_version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format_version {self.format_version}, expected {FORMAT_VERSION}")
        if not self.layers:
            raise ModelFormatError("model has no layers")
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            check_layer(index, layer, shape)
            shape = output_shape(layer, shape)
        if self.layers[-1].kind != LayerKind.DENSE:
            raise ModelFormatError(
                f"layer {len(self.layers) - 1} ({self.layers[-1].kind.value}): final layer must be dense"
            )
        return self

    def shapes(self) -> List[Shape]:
        """Output shape of every layer, in order."""
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = output_shape(layer, shape)
            shapes.append(shape)
        return shapes

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> "LayeredModel":
        return LayeredModel(self.input_shape, [layer.copy() for layer in self.layers], self.format_version)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayeredModel):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and self.input_shape == other.input_shape
            and len(self.layers) == len(other.layers)
            and all(a == b for a, b in zip(self.layers, other.layers))
        )
