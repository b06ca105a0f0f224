import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from INGESTION.idx import Dataset
from INGESTION.layers import LayeredModel
from .forward import dnn_forward, predict

logger = logging.getLogger(__name__)

DEFAULT_PERCENTILE = 99.9
SCALE_FLOOR = np.finfo(np.float64).eps


class NormalizationError(RuntimeError):
    """Raised when normalization changes the model's predictions."""


@dataclass
class ActivationTrace:
    """
    Post-ReLU activations recorded per model layer and the resulting scale factors.

    Weighted layers record max(0, output); relu and pool layers inherit the
    scale of the layer before them.
    """
    activations: List[np.ndarray]
    scales: List[float]
    percentile: float = DEFAULT_PERCENTILE


def nearest_rank_percentile(values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest value (rank >= 1)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("percentile of an empty set")
    if not 0.0 < p <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {p}")
    rank = max(1, math.ceil(round(p * values.size / 100.0, 9)))
    return float(np.partition(values, rank - 1)[rank - 1])


def record_activations(
    model: LayeredModel,
    calib: Dataset,
    percentile: float = DEFAULT_PERCENTILE,
    batch_size: int = 1000,
) -> ActivationTrace:
    """Record activations over the calibration set and derive lambda_norm per layer."""
    if len(calib) == 0:
        raise ValueError("calibration set is empty")

    per_layer: List[List[np.ndarray]] = [[] for _ in model.layers]
    for start in range(0, len(calib), batch_size):
        result = dnn_forward(model, calib.images[start:start + batch_size])
        for index, out in enumerate(result.activations):
            per_layer[index].append(np.maximum(out, 0.0).ravel())
    activations = [np.concatenate(chunks) for chunks in per_layer]

    scales: List[float] = []
    previous = 1.0
    for index, layer in enumerate(model.layers):
        if layer.is_weighted:
            scale = nearest_rank_percentile(activations[index], percentile)
            if scale < SCALE_FLOOR:
                logger.warning(
                    f"layer {index} ({layer.kind.value}): activations vanish at the {percentile} percentile, "
                    f"clamping lambda_norm to {SCALE_FLOOR:.3e}"
                )
                scale = SCALE_FLOOR
        else:
            scale = previous
        scales.append(scale)
        previous = scale

    logger.info(
        "Activation scales: " + ", ".join(f"{i}:{layer.kind.value}={s:.6g}"
                                          for i, (layer, s) in enumerate(zip(model.layers, scales)))
    )
    return ActivationTrace(activations=activations, scales=scales, percentile=percentile)


def normalize_model(model: LayeredModel, trace: ActivationTrace) -> LayeredModel:
    """
    Rescale weights by lambda^{l-1}/lambda^l and biases by 1/lambda^l.

    The input scale lambda^0 is 1; pool and relu layers pass the scale through.
    """
    if len(trace.scales) != len(model.layers):
        raise ValueError(
            f"trace covers {len(trace.scales)} layers but the model has {len(model.layers)}"
        )
    normalized = model.copy()
    previous = 1.0
    for index, layer in enumerate(normalized.layers):
        scale = trace.scales[index]
        if layer.is_weighted:
            layer.weights = layer.weights * (previous / scale)
            layer.bias = layer.bias / scale
        previous = scale
    return normalized.validate()


def check_argmax_invariance(
    model: LayeredModel,
    normalized: LayeredModel,
    images: np.ndarray,
    batch_size: int = 1000,
) -> int:
    """
    Compare DNN predictions before and after normalization.

    Returns the number of images checked.

    Raises:
        NormalizationError: If any prediction differs
    """
    before = predict(model, images, batch_size)
    after = predict(normalized, images, batch_size)
    mismatches = np.nonzero(before != after)[0]
    if mismatches.size:
        error_msg = (
            f"normalization changed {mismatches.size} of {len(images)} predictions "
            f"(first at image {int(mismatches[0])})"
        )
        logger.error(error_msg)
        raise NormalizationError(error_msg)
    logger.info(f"Normalization preserved all {len(images)} predictions")
    return len(images)
