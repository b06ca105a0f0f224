import logging

import numpy as np

from INGESTION.layers import LayeredModel
from .train import loss_and_gradients

logger = logging.getLogger(__name__)

STEP = 1e-5
_FLOOR = 1e-4


def gradient_check(model: LayeredModel, sample: np.ndarray, label: int) -> float:
    """
    Max relative error between backprop gradients and central finite differences.

    Every weight and bias of every weighted layer is perturbed by +/- 1e-5 in
    64-bit arithmetic. Relative error is |a - n| / max(|a|, |n|, 1e-4).
    """
    model = model.copy()
    labels = np.array([label])
    _, grads = loss_and_gradients(model, sample, labels)

    worst = 0.0
    for index, (dw, db) in grads.items():
        layer = model.layers[index]
        for params, analytic in ((layer.weights, dw), (layer.bias, db)):
            for i in range(params.size):
                original = params[i]
                params[i] = original + STEP
                loss_plus, _ = loss_and_gradients(model, sample, labels)
                params[i] = original - STEP
                loss_minus, _ = loss_and_gradients(model, sample, labels)
                params[i] = original
                numeric = (loss_plus - loss_minus) / (2 * STEP)
                error = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), _FLOOR)
                worst = max(worst, error)

    logger.debug(f"Gradient check over {len(grads)} weighted layers: max relative error {worst:.3e}")
    return worst
