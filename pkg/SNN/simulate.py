import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from CODING.encoders import InputEncoder
from CODING.schemes import CodingKind, burst_update, threshold_at
from .network import SnnNetwork, psp_step
from .neurons import fire_step

logger = logging.getLogger(__name__)


@dataclass
class RecordSettings:
    """
    Which spike trains to keep.

    Every ceil(1/fraction)-th neuron of each spiking layer is recorded, for the
    samples whose global index is below `max_samples` (None records all).
    """
    fraction: float = 0.1
    max_samples: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"record fraction must be in (0, 1], got {self.fraction}")

    @property
    def stride(self) -> int:
        return max(1, math.ceil(round(1.0 / self.fraction, 9)))

    def neurons(self, layer_size: int) -> np.ndarray:
        return np.arange(0, layer_size, self.stride)


@dataclass
class SpikeTrain:
    layer: int
    neuron: int
    sample: int
    times: np.ndarray


@dataclass
class SpikeRecord:
    """
    Spike times (0-based steps, strictly increasing, within [0, horizon)) of sampled neurons.

    Layer 0 is the input layer, layer i the i-th spiking hidden layer.
    """
    horizon: int
    fraction: float
    trains: List[SpikeTrain] = field(default_factory=list)

    @classmethod
    def merge(cls, records: Sequence["SpikeRecord"]) -> "SpikeRecord":
        """Concatenate records in the given order."""
        if not records:
            raise ValueError("nothing to merge")
        trains = [train for record in records for train in record.trains]
        return cls(records[0].horizon, records[0].fraction, trains)

    @property
    def total_spikes(self) -> int:
        return int(sum(len(train.times) for train in self.trains))

    def layers(self) -> List[int]:
        return sorted({train.layer for train in self.trains})

    def restrict(self, layers: Sequence[int]) -> "SpikeRecord":
        keep = set(layers)
        return SpikeRecord(self.horizon, self.fraction, [t for t in self.trains if t.layer in keep])


@dataclass
class SimulationResult:
    """
    readout: (T, batch, classes) accumulated readout after each elapsed step.
    spike_counts: (T, batch, layers) spikes per step, column 0 the input layer.
    """
    readout: np.ndarray
    spike_counts: np.ndarray
    record: SpikeRecord

    def predictions(self) -> np.ndarray:
        """Predicted class per elapsed step and sample, shape (T, batch)."""
        return np.argmax(self.readout, axis=-1)


def simulate(
    net: SnnNetwork,
    samples: np.ndarray,
    time_steps: int,
    record: Optional[RecordSettings] = None,
    sample_ids: Optional[Sequence[int]] = None,
) -> SimulationResult:
    """
    Run the network for `time_steps` steps on a batch of samples.

    Layers update synchronously in feed-forward order: layer l consumes the
    spikes layer l-1 emitted in the same step. The readout integrates its PSP
    without firing. The result depends only on (net, samples, time_steps).
    """
    if time_steps < 1:
        raise ValueError(f"time_steps must be >= 1, got {time_steps}")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == net.input_size:
        samples = samples.reshape((1,) + tuple(net.input_shape))
    else:
        samples = samples.reshape((len(samples),) + tuple(net.input_shape))
    batch = len(samples)
    sample_ids = np.arange(batch) if sample_ids is None else np.asarray(sample_ids)
    record = record or RecordSettings()

    net.reset(batch)
    encoder = InputEncoder(net.input_scheme, samples)
    scheme = net.hidden_scheme
    sizes = net.layer_sizes()

    recorded_rows = np.nonzero(
        sample_ids < record.max_samples if record.max_samples is not None else np.ones(batch, dtype=bool)
    )[0]
    recorded_neurons = [record.neurons(size) for size in sizes]
    raster = [np.zeros((time_steps, len(recorded_rows), len(idx)), dtype=bool) for idx in recorded_neurons]

    readout = np.empty((time_steps, batch, net.readout_layer.size), dtype=np.float64)
    counts = np.zeros((time_steps, batch, len(sizes)), dtype=np.int64)

    for t in range(time_steps):
        incoming, input_spikes = encoder.step(t)
        if input_spikes is not None:
            flat = input_spikes.reshape(batch, -1)
            counts[t, :, 0] = flat.sum(axis=1)
            raster[0][t] = flat[np.ix_(recorded_rows, recorded_neurons[0])]

        for li, layer in enumerate(net.hidden_layers, start=1):
            z = psp_step(layer, incoming)
            state = net.states[li - 1]
            v_th = threshold_at(scheme, t, state.burst)
            state = fire_step(state, z, v_th, reset=net.reset_mode, layer=layer.source_index, step=t)
            if scheme.kind == CodingKind.BURST:
                state.burst = burst_update(state.burst, state.spiked, scheme.beta, scheme.g_cap)
            net.states[li - 1] = state

            flat = state.spiked.reshape(batch, -1)
            counts[t, :, li] = flat.sum(axis=1)
            raster[li][t] = flat[np.ix_(recorded_rows, recorded_neurons[li])]
            incoming = state.weighted_spikes()

        net.readout = net.readout + psp_step(net.readout_layer, incoming)
        readout[t] = net.readout

    trains = []
    for row, sample in enumerate(sample_ids[recorded_rows]):
        for layer, neurons in enumerate(recorded_neurons):
            if layer == 0 and not net.input_spiking:
                continue
            for column, neuron in enumerate(neurons):
                times = np.nonzero(raster[layer][:, row, column])[0].astype(np.int64)
                trains.append(SpikeTrain(layer=layer, neuron=int(neuron), sample=int(sample), times=times))

    return SimulationResult(
        readout=readout,
        spike_counts=counts,
        record=SpikeRecord(horizon=time_steps, fraction=record.fraction, trains=trains),
    )


def classify_at(trajectory: np.ndarray, t: int):
    """
    Predicted class after t elapsed steps (1 <= t <= T); ties go to the lowest class index.

    `trajectory` is (T, classes) for one sample or (T, batch, classes).
    """
    trajectory = np.asarray(trajectory)
    if not 1 <= t <= len(trajectory):
        raise ValueError(f"time step {t} outside trajectory of length {len(trajectory)}")
    prediction = np.argmax(trajectory[t - 1], axis=-1)
    return int(prediction) if np.ndim(prediction) == 0 else prediction
