import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from INGESTION.layers import LayeredModel, LayerKind, LayerSpec
from . import ops

logger = logging.getLogger(__name__)


class ShapeError(ValueError):
    """Raised when an input does not match the shape a model or layer expects."""


@dataclass
class ForwardResult:
    """Output of every layer (index-aligned with model.layers); the last one is the logits."""
    activations: List[np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return self.activations[-1]


def as_batch(model: LayeredModel, x: np.ndarray) -> np.ndarray:
    """Reshape one sample or a batch of samples to (N, *model.input_shape)."""
    x = np.asarray(x, dtype=np.float64)
    size = int(np.prod(model.input_shape))
    if x.size == size and (x.ndim == 1 or x.shape == tuple(model.input_shape)):
        return x.reshape((1,) + tuple(model.input_shape))
    if x.ndim >= 2 and int(np.prod(x.shape[1:])) == size:
        return x.reshape((len(x),) + tuple(model.input_shape))
    raise ShapeError(f"input of shape {x.shape} does not match model input shape {model.input_shape}")


def layer_forward(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    kind = layer.kind
    if kind == LayerKind.DENSE:
        return ops.dense_forward(x, layer.weight_matrix(), layer.bias)
    if kind == LayerKind.CONV2D:
        return ops.conv2d_forward(x, layer)
    if kind == LayerKind.AVGPOOL:
        return ops.avgpool_forward(x, layer.window, layer.stride)
    if kind == LayerKind.MAXPOOL:
        return ops.maxpool_forward(x, layer.window, layer.stride)
    return ops.relu(x)


def dnn_forward(model: LayeredModel, x: np.ndarray) -> ForwardResult:
    """Run the reference DNN on one sample or a batch, keeping every intermediate activation."""
    out = as_batch(model, x)
    activations = []
    for layer in model.layers:
        out = layer_forward(layer, out)
        activations.append(out)
    return ForwardResult(activations)


def predict(model: LayeredModel, images: np.ndarray, batch_size: int = 1000) -> np.ndarray:
    """Argmax class per image, evaluated in fixed-size batches."""
    predictions = []
    for start in range(0, len(images), batch_size):
        logits = dnn_forward(model, images[start:start + batch_size]).logits
        predictions.append(np.argmax(logits, axis=1))
    if not predictions:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(predictions)


def accuracy(model: LayeredModel, images: np.ndarray, labels: np.ndarray, batch_size: int = 1000) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(model, images, batch_size) == labels))
