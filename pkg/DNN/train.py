import logging
import math
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from INGESTION.idx import Dataset
from INGESTION.layers import LayeredModel, LayerKind, LayerSpec, ModelFormatError, output_shape
from . import ops
from .forward import as_batch, layer_forward

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when training diverges."""


class TrainSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(0.1, ge=0.0)
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(64, ge=1)
    seed: int = 0
    init: Literal["uniform_fanin"] = "uniform_fanin"


class LayerPlan(BaseModel):
    """Architecture entry without parameters; shapes are inferred from the previous layer."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: LayerKind
    out_dim: Optional[int] = Field(None, ge=1)
    out_c: Optional[int] = Field(None, ge=1)
    k_h: Optional[int] = Field(None, ge=1)
    k_w: Optional[int] = Field(None, ge=1)
    stride: Optional[int] = Field(None, ge=1)
    padding: Literal["valid", "same"] = "valid"
    window: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "LayerPlan":
        if self.kind == LayerKind.DENSE and self.out_dim is None:
            raise ValueError("dense layers need out_dim")
        if self.kind == LayerKind.CONV2D and (self.out_c is None or self.k_h is None or self.k_w is None):
            raise ValueError("conv2d layers need out_c, k_h and k_w")
        if self.kind in (LayerKind.AVGPOOL, LayerKind.MAXPOOL) and self.window is None:
            raise ValueError(f"{self.kind.value} layers need window")
        return self


DEFAULT_ARCHITECTURE = (
    LayerPlan(kind=LayerKind.DENSE, out_dim=300),
    LayerPlan(kind=LayerKind.RELU),
    LayerPlan(kind=LayerKind.DENSE, out_dim=10),
)


def init_model(
    input_shape: Tuple[int, ...],
    architecture: Sequence[LayerPlan],
    settings: TrainSettings,
) -> LayeredModel:
    """Build a model from a layer plan with uniform fan-in initialisation and zero biases."""
    rng = np.random.default_rng(settings.seed)
    shape = tuple(input_shape)
    layers: List[LayerSpec] = []
    for plan in architecture:
        if plan.kind == LayerKind.DENSE:
            fan_in = int(np.prod(shape))
            limit = math.sqrt(6.0 / fan_in)
            layer = LayerSpec(
                kind=LayerKind.DENSE, in_dim=fan_in, out_dim=plan.out_dim,
                weights=rng.uniform(-limit, limit, fan_in * plan.out_dim),
                bias=np.zeros(plan.out_dim),
            )
        elif plan.kind == LayerKind.CONV2D:
            if len(shape) != 3:
                raise ModelFormatError(f"conv2d needs an (h, w, c) input, got {shape}")
            in_h, in_w, in_c = shape
            fan_in = plan.k_h * plan.k_w * in_c
            limit = math.sqrt(6.0 / fan_in)
            layer = LayerSpec(
                kind=LayerKind.CONV2D, in_h=in_h, in_w=in_w, in_c=in_c, out_c=plan.out_c,
                k_h=plan.k_h, k_w=plan.k_w, stride=plan.stride or 1, padding=plan.padding,
                weights=rng.uniform(-limit, limit, fan_in * plan.out_c),
                bias=np.zeros(plan.out_c),
            )
        elif plan.kind in (LayerKind.AVGPOOL, LayerKind.MAXPOOL):
            layer = LayerSpec(kind=plan.kind, window=plan.window, stride=plan.stride or plan.window)
        else:
            layer = LayerSpec(kind=LayerKind.RELU)
        layers.append(layer)
        shape = output_shape(layer, shape)
    return LayeredModel(input_shape=tuple(input_shape), layers=layers).validate()


def loss_and_gradients(model: LayeredModel, x: np.ndarray, labels: np.ndarray):
    """
    Mean softmax cross-entropy over the batch and its gradients.

    Returns (loss, grads) where grads maps each weighted layer index to (dW, db)
    shaped like the flat weights and bias arrays.
    """
    out = as_batch(model, x)
    inputs = []
    for layer in model.layers:
        inputs.append(out)
        out = layer_forward(layer, out)
    loss, dout = ops.cross_entropy(out, np.asarray(labels))

    grads = {}
    for index in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[index]
        x_in = inputs[index]
        if layer.kind == LayerKind.DENSE:
            dout, dw, db = ops.dense_backward(x_in, layer.weight_matrix(), dout)
            grads[index] = (dw.ravel(), db)
        elif layer.kind == LayerKind.CONV2D:
            dout, dw, db = ops.conv2d_backward(x_in, layer, dout)
            grads[index] = (dw.ravel(), db)
        elif layer.kind == LayerKind.AVGPOOL:
            dout = ops.avgpool_backward(x_in.shape, layer.window, layer.stride, dout)
        elif layer.kind == LayerKind.RELU:
            dout = ops.relu_backward(x_in, dout)
        else:
            raise TrainingError(f"layer {index}: {layer.kind.value} has no backward pass")
    return loss, grads


def train(model: LayeredModel, data: Dataset, settings: TrainSettings, progress: bool = True) -> LayeredModel:
    """
    Minibatch SGD on softmax cross-entropy; deterministic for a given settings.seed.

    Raises:
        ValueError: If the model does not end in a dense classifier wide enough for the labels
        TrainingError: If the loss becomes non-finite
    """
    model = model.copy().validate()
    if len(data) == 0:
        raise ValueError("training set is empty")
    if int(data.labels.max()) >= model.num_classes:
        raise ValueError(f"label {int(data.labels.max())} outside classifier width {model.num_classes}")
    for index, layer in enumerate(model.layers):
        if layer.kind == LayerKind.MAXPOOL:
            raise TrainingError(f"layer {index}: maxpool layers cannot be trained")

    rng = np.random.default_rng(settings.seed)
    n = len(data)
    logger.info(
        f"Training on {n} samples: {settings.epochs} epochs, batch {settings.batch_size}, lr {settings.learning_rate}"
    )

    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        batches = range(0, n, settings.batch_size)
        for start in tqdm(batches, desc=f"epoch {epoch}", disable=not progress, leave=False):
            idx = order[start:start + settings.batch_size]
            loss, grads = loss_and_gradients(model, data.images[idx], data.labels[idx])
            if not math.isfinite(loss):
                error_msg = (
                    f"non-finite loss at epoch {epoch}, batch starting {start}; "
                    f"learning rate {settings.learning_rate} is probably too high"
                )
                logger.error(error_msg)
                raise TrainingError(error_msg)
            total_loss += loss * len(idx)
            for index, (dw, db) in grads.items():
                layer = model.layers[index]
                layer.weights -= settings.learning_rate * dw
                layer.bias -= settings.learning_rate * db
        logger.info(f"Epoch {epoch}/{settings.epochs}: mean training loss {total_loss / n:.6f}")

    return model
