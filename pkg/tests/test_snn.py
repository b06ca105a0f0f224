import math

import numpy as np
import pytest

from ANALYSIS.spikes import isi_histogram
from CODING.schemes import CodingKind, CodingScheme, burst_update, threshold_at
from DNN.forward import dnn_forward
from INGESTION.layers import LayeredModel, LayerKind, LayerSpec
from SNN.network import ConversionError, convert, psp_step
from SNN.neurons import NeuronLayerState, SimulationError, fire_step
from SNN.simulate import RecordSettings, classify_at, simulate


def run_single_neuron(scheme: CodingScheme, v_mem: float, z_stream):
    """Drive one neuron with a PSP stream; returns (emitted weights per step, final potential)."""
    state = NeuronLayerState.initial((1,), with_burst=scheme.kind == CodingKind.BURST)
    state.v_mem[:] = v_mem
    emitted = []
    for t, z in enumerate(z_stream):
        state = fire_step(state, np.array([z]), threshold_at(scheme, t, state.burst))
        if scheme.kind == CodingKind.BURST:
            state.burst = burst_update(state.burst, state.spiked, scheme.beta, scheme.g_cap)
        emitted.append(float(state.emitted_weight[0]))
    return emitted, float(state.v_mem[0])


def test_burst_transmits_stored_potential_in_three_spikes():
    emitted, v_mem = run_single_neuron(CodingScheme.burst(v_th=0.125, beta=2.0), 0.875, [0.0] * 10)
    assert [w for w in emitted if w] == [0.125, 0.25, 0.5]
    assert emitted[:3] == [0.125, 0.25, 0.5]
    assert v_mem == 0.0


def test_rate_needs_seven_spikes_for_the_same_potential():
    emitted, v_mem = run_single_neuron(CodingScheme.rate(v_th=0.125), 0.875, [0.0] * 10)
    assert emitted[:7] == [0.125] * 7
    assert sum(1 for w in emitted if w) == 7
    assert v_mem == 0.0


@pytest.mark.parametrize("scheme", [
    CodingScheme.rate(v_th=0.25),
    CodingScheme.phase(k=8, v_th=1.0),
    CodingScheme.burst(v_th=0.125, beta=2.0),
])
def test_charge_is_conserved(scheme):
    rng = np.random.default_rng(99)
    streams, steps = 10_000, 40
    z = rng.uniform(-0.2, 0.6, size=(steps, streams))
    state = NeuronLayerState.initial((streams,), with_burst=scheme.kind == CodingKind.BURST)
    emitted_total = np.zeros(streams)
    for t in range(steps):
        state = fire_step(state, z[t], threshold_at(scheme, t, state.burst))
        if scheme.kind == CodingKind.BURST:
            state.burst = burst_update(state.burst, state.spiked, scheme.beta, scheme.g_cap)
        emitted_total += state.emitted_weight
    assert np.max(np.abs(z.sum(axis=0) - (state.v_mem + emitted_total))) <= 1e-9


def test_zero_reset_discards_residual():
    state = NeuronLayerState.initial((1,))
    state = fire_step(state, np.array([1.5]), 1.0, reset="zero")
    assert state.spiked[0] and state.v_mem[0] == 0.0
    state = fire_step(NeuronLayerState.initial((1,)), np.array([1.5]), 1.0)
    assert state.v_mem[0] == 0.5


def test_threshold_equality_fires():
    state = fire_step(NeuronLayerState.initial((1,)), np.array([0.125]), 0.125)
    assert state.spiked[0] and state.v_mem[0] == 0.0


def test_non_finite_psp_raises():
    with pytest.raises(SimulationError, match="layer 3 at time step 7"):
        fire_step(NeuronLayerState.initial((2,)), np.array([0.0, np.nan]), 1.0, layer=3, step=7)


def test_convert_drops_relu_and_keeps_parameters(tiny_mlp):
    net = convert(tiny_mlp, CodingScheme.real(), CodingScheme.rate())
    assert [layer.source_index for layer in net.layers] == [0, 2]
    assert net.readout_layer.role == "readout"
    assert np.array_equal(net.hidden_layers[0].spec.weights, tiny_mlp.layers[0].weights)
    assert net.num_spiking_neurons == 3
    tiny_mlp.layers[0].weights[0] = 9.0
    assert net.hidden_layers[0].spec.weights[0] != 9.0


def test_convert_counts_spiking_input_neurons(tiny_mlp):
    net = convert(tiny_mlp, CodingScheme.phase(k=8, v_th=8.0), CodingScheme.burst())
    assert net.num_spiking_neurons == 4 + 3
    assert net.layer_sizes() == [4, 3]


def test_convert_rejects_maxpool_and_missing_relu():
    conv = LayerSpec(kind=LayerKind.CONV2D, in_h=4, in_w=4, in_c=1, out_c=1, k_h=1, k_w=1, stride=1,
                     padding="valid", weights=[1.0], bias=[0.0])
    readout = LayerSpec(kind=LayerKind.DENSE, in_dim=4, out_dim=2, weights=np.zeros(8), bias=np.zeros(2))
    with_maxpool = LayeredModel((4, 4, 1), [conv, LayerSpec(kind=LayerKind.RELU),
                                           LayerSpec(kind=LayerKind.MAXPOOL, window=2, stride=2), readout])
    with pytest.raises(ConversionError, match="max pooling"):
        convert(with_maxpool, CodingScheme.real(), CodingScheme.rate())
    no_relu = LayeredModel((4, 4, 1), [conv, LayerSpec(kind=LayerKind.AVGPOOL, window=2, stride=2), readout])
    with pytest.raises(ConversionError, match="followed by relu"):
        convert(no_relu, CodingScheme.real(), CodingScheme.rate())


def test_convert_rejects_swapped_schemes(tiny_mlp):
    with pytest.raises(ConversionError):
        convert(tiny_mlp, CodingScheme.burst(), CodingScheme.rate())
    with pytest.raises(ConversionError):
        convert(tiny_mlp, CodingScheme.real(), CodingScheme.real())


def test_psp_rejects_wrong_shape(tiny_mlp):
    net = convert(tiny_mlp, CodingScheme.real(), CodingScheme.rate())
    with pytest.raises(ValueError):
        psp_step(net.hidden_layers[0], np.zeros((1, 5)))


def test_real_input_rate_hidden_approaches_dnn(tiny_mlp, rng):
    images = rng.uniform(size=(20, 4))
    net = convert(tiny_mlp, CodingScheme.real(), CodingScheme.rate(v_th=1.0))
    result = simulate(net, images, 400)
    rate = result.readout[-1] / 400
    logits = dnn_forward(tiny_mlp, images).logits
    assert np.allclose(rate, logits, atol=0.05)


def test_simulation_is_deterministic_and_shaped(tiny_mlp, rng):
    images = rng.uniform(size=(5, 4))
    net = convert(tiny_mlp, CodingScheme.phase(k=8, v_th=8.0), CodingScheme.burst(v_th=0.125))
    first = simulate(net, images, 16, record=RecordSettings(fraction=1.0))
    second = simulate(net, images, 16, record=RecordSettings(fraction=1.0))
    assert first.readout.shape == (16, 5, 2)
    assert first.spike_counts.shape == (16, 5, 2)
    assert np.array_equal(first.readout, second.readout)
    assert np.array_equal(first.spike_counts, second.spike_counts)
    assert first.record.total_spikes == int(first.spike_counts.sum())


def test_batch_matches_single_samples(tiny_mlp, rng):
    images = rng.uniform(size=(3, 4))
    net = convert(tiny_mlp, CodingScheme.rate(), CodingScheme.burst(v_th=0.125))
    batch = simulate(net, images, 12)
    for i in range(3):
        single = simulate(net, images[i], 12)
        assert np.allclose(single.readout[:, 0], batch.readout[:, i], rtol=0, atol=1e-12)


def test_single_step_horizon(tiny_mlp):
    net = convert(tiny_mlp, CodingScheme.real(), CodingScheme.rate())
    result = simulate(net, np.ones((2, 4)), 1)
    assert result.readout.shape == (1, 2, 2)
    assert classify_at(result.readout, 1).shape == (2,)


def test_record_sampling():
    settings = RecordSettings(fraction=0.1)
    assert settings.stride == 10
    assert list(settings.neurons(25)) == [0, 10, 20]
    with pytest.raises(ValueError):
        RecordSettings(fraction=0.0)


def test_record_limits_samples(tiny_mlp, rng):
    net = convert(tiny_mlp, CodingScheme.rate(), CodingScheme.rate())
    result = simulate(net, rng.uniform(size=(4, 4)), 8, RecordSettings(fraction=1.0, max_samples=12),
                      sample_ids=[10, 11, 12, 13])
    assert sorted({train.sample for train in result.record.trains}) == [10, 11]
    assert result.record.layers() == [0, 1]
    assert all(np.all(np.diff(train.times) > 0) for train in result.record.trains)


def test_real_input_is_not_recorded(tiny_mlp, rng):
    net = convert(tiny_mlp, CodingScheme.real(), CodingScheme.rate())
    result = simulate(net, rng.uniform(size=(2, 4)), 8, RecordSettings(fraction=1.0))
    assert result.record.layers() == [1]
    assert result.spike_counts[:, :, 0].sum() == 0


def test_classify_at_ties_and_bounds():
    trajectory = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
    assert classify_at(trajectory, 1) == 0
    assert classify_at(trajectory, 2) == 1
    with pytest.raises(ValueError):
        classify_at(trajectory, 3)
    with pytest.raises(ValueError):
        classify_at(trajectory, 0)


def leading_run(emitted):
    count = 0
    for weight in emitted:
        if not weight:
            break
        count += 1
    return count


def test_burst_run_length_is_logarithmic():
    v_th = 0.125
    for residual in np.linspace(v_th, 40.0, 400):
        emitted, _ = run_single_neuron(CodingScheme.burst(v_th=v_th, beta=2.0), residual, [0.0] * 40)
        assert 1 <= leading_run(emitted) <= math.ceil(math.log2(residual / v_th)) + 1


def test_rate_emission_tracks_constant_input():
    v_th, steps = 0.25, 200
    for a in np.linspace(0.01, v_th, 25):
        emitted, v_mem = run_single_neuron(CodingScheme.rate(v_th=v_th), 0.0, [a] * steps)
        assert abs(sum(emitted) - a * steps) < v_th
        assert 0.0 <= v_mem < v_th


def test_phase_hidden_neuron_keeps_up_with_unit_input():
    emitted, v_mem = run_single_neuron(CodingScheme.phase(k=8, v_th=8.0), 0.0, [0.5] * 256)
    assert abs(sum(emitted) - 128.0) <= 8.0
    assert v_mem < 8.0


def chain(weight_in, weight_out):
    return LayeredModel(
        input_shape=(1,),
        layers=[
            LayerSpec(kind=LayerKind.DENSE, in_dim=1, out_dim=1, weights=[weight_in], bias=[0.0]),
            LayerSpec(kind=LayerKind.RELU),
            LayerSpec(kind=LayerKind.DENSE, in_dim=1, out_dim=1, weights=[weight_out], bias=[0.0]),
        ],
    ).validate()


def test_unit_chain_readout_grows_each_step():
    net = convert(chain(1.0, 1.0), CodingScheme.real(), CodingScheme.rate(v_th=0.5))
    result = simulate(net, np.array([[0.5]]), 3)
    assert result.readout[:, 0, 0].tolist() == [0.5, 1.0, 1.5]
    assert result.spike_counts[:, 0, 1].tolist() == [1, 1, 1]


@pytest.mark.parametrize("hidden", [CodingScheme.rate(v_th=0.25), CodingScheme.burst(v_th=0.125)])
def test_readout_is_monotone_for_non_negative_weights(tiny_mlp, rng, hidden):
    model = tiny_mlp.copy()
    for layer in model.layers:
        if layer.is_weighted:
            layer.weights = np.abs(layer.weights)
            layer.bias = np.abs(layer.bias)
    net = convert(model, CodingScheme.phase(k=8, v_th=8.0), hidden)
    result = simulate(net, rng.uniform(size=(6, 4)), 64)
    assert np.all(np.diff(result.readout, axis=0) >= 0.0)


def test_burst_coding_raises_short_interval_share():
    images = np.array([[0.3]])
    record = RecordSettings(fraction=1.0)
    rate = simulate(convert(chain(1.0, 1.0), CodingScheme.real(), CodingScheme.rate(v_th=1.0)), images, 200, record)
    burst = simulate(convert(chain(1.0, 1.0), CodingScheme.real(), CodingScheme.burst(v_th=0.125)), images, 200, record)
    assert isi_histogram(burst.record).mass_at(1) > isi_histogram(rate.record).mass_at(1)
