import numpy as np
import pytest

from DNN import ops
from DNN.forward import ShapeError, accuracy, dnn_forward, predict
from DNN.gradcheck import gradient_check
from DNN.normalize import (
    ActivationTrace,
    NormalizationError,
    check_argmax_invariance,
    nearest_rank_percentile,
    normalize_model,
    record_activations,
)
from DNN.train import LayerPlan, TrainingError, TrainSettings, init_model, loss_and_gradients, train
from INGESTION.idx import Dataset
from INGESTION.layers import LayeredModel, LayerKind, LayerSpec


def test_forward_keeps_every_activation(tiny_mlp):
    result = dnn_forward(tiny_mlp, np.array([1.0, 0.0, 0.5, 0.25]))
    assert [a.shape for a in result.activations] == [(1, 3), (1, 3), (1, 2)]
    hidden = np.array([1.0, 0.0, 0.5, 0.25]) @ tiny_mlp.layers[0].weight_matrix() + tiny_mlp.layers[0].bias
    assert np.allclose(result.activations[1][0], np.maximum(hidden, 0.0))


def test_forward_rejects_wrong_shape(tiny_mlp):
    with pytest.raises(ShapeError):
        dnn_forward(tiny_mlp, np.zeros(5))


def test_conv_same_padding_keeps_size():
    layer = LayerSpec(kind=LayerKind.CONV2D, in_h=5, in_w=5, in_c=1, out_c=2, k_h=3, k_w=3, stride=1,
                      padding="same", weights=np.ones(18), bias=np.zeros(2))
    out = ops.conv2d_forward(np.ones((1, 5, 5, 1)), layer)
    assert out.shape == (1, 5, 5, 2)
    assert out[0, 2, 2, 0] == 9.0
    assert out[0, 0, 0, 0] == 4.0


def test_conv_valid_stride():
    layer = LayerSpec(kind=LayerKind.CONV2D, in_h=5, in_w=5, in_c=1, out_c=1, k_h=3, k_w=3, stride=2,
                      padding="valid", weights=np.ones(9), bias=np.array([1.0]))
    x = np.arange(25, dtype=np.float64).reshape(1, 5, 5, 1)
    out = ops.conv2d_forward(x, layer)
    assert out.shape == (1, 2, 2, 1)
    assert out[0, 0, 0, 0] == x[0, :3, :3, 0].sum() + 1.0


def test_avgpool_and_maxpool():
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    assert np.array_equal(ops.avgpool_forward(x, 2, 2)[0, :, :, 0], [[2.5, 4.5], [10.5, 12.5]])
    assert np.array_equal(ops.maxpool_forward(x, 2, 2)[0, :, :, 0], [[5, 7], [13, 15]])


def test_cross_entropy_of_uniform_logits():
    loss, grad = ops.cross_entropy(np.zeros((2, 4)), np.array([0, 3]))
    assert loss == pytest.approx(np.log(4))
    assert grad.shape == (2, 4)
    assert np.allclose(grad.sum(axis=1), 0.0)


def test_gradient_check_dense(rng):
    model = init_model((6,), [LayerPlan(kind="dense", out_dim=5), LayerPlan(kind="relu"),
                              LayerPlan(kind="dense", out_dim=3)], TrainSettings(seed=4))
    for layer in model.layers:
        if layer.is_weighted:
            layer.bias = rng.normal(scale=0.1, size=layer.bias.size)
    assert gradient_check(model, rng.uniform(size=6), label=2) < 1e-4


def test_gradient_check_conv(rng):
    model = init_model(
        (5, 5, 2),
        [
            LayerPlan(kind="conv2d", out_c=3, k_h=3, k_w=3, padding="same"),
            LayerPlan(kind="relu"),
            LayerPlan(kind="avgpool", window=2),
            LayerPlan(kind="dense", out_dim=4),
        ],
        TrainSettings(seed=5),
    )
    assert gradient_check(model, rng.uniform(size=(5, 5, 2)), label=1) < 1e-4


def toy_dataset(rng, n=120):
    labels = rng.integers(0, 2, size=n)
    images = rng.uniform(0.0, 0.3, size=(n, 4))
    images[np.arange(n), labels] += 0.7
    return Dataset(images=images, labels=labels, split="train", image_shape=(2, 2, 1))


def test_training_reduces_loss_and_is_deterministic(rng):
    data = toy_dataset(rng)
    settings = TrainSettings(learning_rate=0.5, epochs=20, batch_size=8, seed=1)
    plan = [LayerPlan(kind="dense", out_dim=6), LayerPlan(kind="relu"), LayerPlan(kind="dense", out_dim=2)]
    start = init_model((4,), plan, settings)
    before, _ = loss_and_gradients(start, data.images, data.labels)
    first = train(start, data, settings, progress=False)
    second = train(init_model((4,), plan, settings), data, settings, progress=False)
    after, _ = loss_and_gradients(first, data.images, data.labels)
    assert after < before
    assert first == second
    assert accuracy(first, data.images, data.labels) > 0.9


def test_training_divergence_raises(rng):
    data = toy_dataset(rng)
    data.images[0, 0] = np.inf
    settings = TrainSettings(learning_rate=0.1, epochs=1, batch_size=200, seed=0)
    model = init_model((4,), [LayerPlan(kind="dense", out_dim=2)], settings)
    with pytest.raises(TrainingError, match="non-finite"):
        train(model, data, settings, progress=False)


def test_epochs_must_be_positive():
    with pytest.raises(ValueError):
        TrainSettings(epochs=0)


def test_init_model_uniform_fan_in():
    model = init_model((100,), [LayerPlan(kind="dense", out_dim=50)], TrainSettings(seed=0))
    limit = np.sqrt(6.0 / 100)
    assert np.all(np.abs(model.layers[0].weights) <= limit)
    assert np.all(model.layers[0].bias == 0.0)


def test_nearest_rank_percentile():
    values = np.arange(1, 1001, dtype=np.float64)
    assert nearest_rank_percentile(values, 99.9) == 999.0
    assert nearest_rank_percentile(values, 100.0) == 1000.0
    assert nearest_rank_percentile(np.array([5.0]), 0.1) == 5.0


def test_identity_scales_leave_model_unchanged(tiny_mlp):
    trace = ActivationTrace(activations=[], scales=[1.0, 1.0, 1.0])
    assert normalize_model(tiny_mlp, trace) == tiny_mlp


def test_scales_rescale_weights_and_biases(tiny_mlp):
    trace = ActivationTrace(activations=[], scales=[2.0, 2.0, 4.0])
    normalized = normalize_model(tiny_mlp, trace)
    assert np.array_equal(normalized.layers[0].weights, tiny_mlp.layers[0].weights / 2.0)
    assert np.array_equal(normalized.layers[0].bias, tiny_mlp.layers[0].bias / 2.0)
    assert np.array_equal(normalized.layers[2].weights, tiny_mlp.layers[2].weights * (2.0 / 4.0))
    assert np.array_equal(normalized.layers[2].bias, tiny_mlp.layers[2].bias / 4.0)


def test_normalization_keeps_predictions(tiny_mlp, rng):
    images = rng.uniform(size=(300, 4))
    calib = Dataset(images=images[:200], labels=np.zeros(200, dtype=np.int64), split="train", image_shape=(2, 2, 1))
    trace = record_activations(tiny_mlp, calib, percentile=99.9)
    assert trace.scales[1] == trace.scales[0]
    normalized = normalize_model(tiny_mlp, trace)
    assert check_argmax_invariance(tiny_mlp, normalized, images) == 300
    assert np.array_equal(predict(tiny_mlp, images), predict(normalized, images))


def test_max_normalization_bounds_activations(tiny_mlp, rng):
    images = rng.uniform(size=(100, 4))
    calib = Dataset(images=images, labels=np.zeros(100, dtype=np.int64), split="train", image_shape=(2, 2, 1))
    normalized = normalize_model(tiny_mlp, record_activations(tiny_mlp, calib, percentile=100.0))
    hidden = dnn_forward(normalized, images).activations[1]
    assert hidden.max() == pytest.approx(1.0)


def test_vanishing_layer_is_clamped(caplog):
    model = LayeredModel(
        input_shape=(2,),
        layers=[
            LayerSpec(kind=LayerKind.DENSE, in_dim=2, out_dim=2, weights=-np.ones(4), bias=np.zeros(2)),
            LayerSpec(kind=LayerKind.RELU),
            LayerSpec(kind=LayerKind.DENSE, in_dim=2, out_dim=2, weights=np.ones(4), bias=np.zeros(2)),
        ],
    ).validate()
    calib = Dataset(images=np.ones((10, 2)), labels=np.zeros(10, dtype=np.int64), split="train", image_shape=(1, 2, 1))
    trace = record_activations(model, calib)
    assert trace.scales[0] == np.finfo(np.float64).eps
    assert "clamping" in caplog.text


def test_argmax_mismatch_raises(tiny_mlp, rng):
    broken = tiny_mlp.copy()
    broken.layers[2].weights = -broken.layers[2].weights
    broken.layers[2].bias = -broken.layers[2].bias
    with pytest.raises(NormalizationError, match="changed"):
        check_argmax_invariance(tiny_mlp, broken, rng.uniform(size=(50, 4)))


def calibration_set(images):
    return Dataset(images=images, labels=np.zeros(len(images), dtype=np.int64), split="train", image_shape=(2, 2, 1))


def test_scales_grow_with_percentile(tiny_mlp, rng):
    calib = calibration_set(rng.uniform(size=(500, 4)))
    percentiles = (50.0, 90.0, 99.0, 99.9, 100.0)
    scales = np.array([record_activations(tiny_mlp, calib, percentile=p).scales for p in percentiles])
    assert np.all(np.diff(scales, axis=0) >= 0.0)


def test_normalized_model_records_unit_scales(tiny_mlp, rng):
    calib = calibration_set(rng.uniform(size=(500, 4)))
    normalized = normalize_model(tiny_mlp, record_activations(tiny_mlp, calib, percentile=99.9))
    assert np.allclose(record_activations(normalized, calib, percentile=99.9).scales, 1.0, atol=1e-9)


def test_zero_learning_rate_keeps_parameters(rng):
    data = toy_dataset(rng)
    settings = TrainSettings(learning_rate=0.0, epochs=2, batch_size=16, seed=3)
    start = init_model((4,), [LayerPlan(kind="dense", out_dim=5), LayerPlan(kind="relu"),
                              LayerPlan(kind="dense", out_dim=2)], settings)
    assert train(start, data, settings, progress=False) == start
