"""Spike-train statistics over SpikeRecords: ISI histograms, burst composition, firing rate and regularity."""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from SNN.simulate import SpikeRecord

logger = logging.getLogger(__name__)

# Burst length buckets: isolated spikes, bursts of 2, 3, 4 and 5 or more.
BURST_BUCKETS = (1, 2, 3, 4, 5)


@dataclass
class IsiHistogram:
    isi: np.ndarray
    count: np.ndarray
    empty: bool = False

    @property
    def total(self) -> int:
        return int(self.count.sum())

    def mass_at(self, isi: int) -> float:
        """Fraction of all intervals equal to `isi`."""
        if self.total == 0:
            return 0.0
        return float(self.count[self.isi == isi].sum()) / self.total


def intervals(times: np.ndarray) -> np.ndarray:
    return np.diff(np.asarray(times, dtype=np.int64))


def isi_histogram(record: SpikeRecord, bins: Optional[Sequence[int]] = None) -> IsiHistogram:
    """
    Histogram of inter-spike intervals pooled over every recorded train.

    Without `bins` every observed integer interval gets its own bin. With
    `bins`, the values are left bin edges and the last bin collects everything
    above it. When no train has two spikes the result is empty and flagged.
    """
    pooled = [intervals(train.times) for train in record.trains if len(train.times) >= 2]
    if not pooled:
        logger.warning("No recorded neuron fired twice; ISI histogram is empty")
        edges = np.asarray(bins if bins is not None else [], dtype=np.int64)
        return IsiHistogram(isi=edges, count=np.zeros(len(edges), dtype=np.int64), empty=True)

    values = np.concatenate(pooled)
    if bins is None:
        isi, count = np.unique(values, return_counts=True)
        return IsiHistogram(isi=isi.astype(np.int64), count=count.astype(np.int64))

    edges = np.asarray(sorted(bins), dtype=np.int64)
    positions = np.searchsorted(edges, values, side="right") - 1
    positions = positions[positions >= 0]
    count = np.bincount(positions, minlength=len(edges)).astype(np.int64)
    return IsiHistogram(isi=edges, count=count)


def run_lengths(times: np.ndarray) -> np.ndarray:
    """Lengths of maximal runs of spikes at consecutive time steps."""
    times = np.asarray(times, dtype=np.int64)
    if times.size == 0:
        return np.zeros(0, dtype=np.int64)
    breaks = np.nonzero(np.diff(times) != 1)[0] + 1
    bounds = np.concatenate(([0], breaks, [times.size]))
    return np.diff(bounds)


@dataclass
class BurstComposition:
    """
    Burst statistics; a burst is a run of two or more spikes at consecutive steps.

    run_counts and spike_counts are keyed by length bucket (5 stands for 5 or more).
    """
    total_spikes: int
    burst_spikes: int
    run_counts: Dict[int, int] = field(default_factory=dict)
    spike_counts: Dict[int, int] = field(default_factory=dict)

    @property
    def burst_fraction(self) -> float:
        return self.burst_spikes / self.total_spikes if self.total_spikes else 0.0

    def length_histogram(self) -> Dict[int, int]:
        """Number of bursts per length bucket (2, 3, 4, 5+), nonzero buckets only."""
        return {length: count for length, count in self.run_counts.items() if length >= 2 and count}

    def fraction_of(self, bucket: int) -> float:
        return self.spike_counts.get(bucket, 0) / self.total_spikes if self.total_spikes else 0.0


def burst_composition(record: SpikeRecord) -> BurstComposition:
    run_counts = {bucket: 0 for bucket in BURST_BUCKETS}
    spike_counts = {bucket: 0 for bucket in BURST_BUCKETS}
    for train in record.trains:
        lengths = run_lengths(train.times)
        if lengths.size == 0:
            continue
        buckets = np.minimum(lengths, BURST_BUCKETS[-1])
        for bucket in BURST_BUCKETS:
            mask = buckets == bucket
            run_counts[bucket] += int(mask.sum())
            spike_counts[bucket] += int(lengths[mask].sum())
    total = sum(spike_counts.values())
    burst = total - spike_counts[1]
    return BurstComposition(total_spikes=total, burst_spikes=burst, run_counts=run_counts, spike_counts=spike_counts)


def firing_rate(isis: np.ndarray) -> float:
    """Spikes per time step over the observed intervals: n / sum(I)."""
    isis = np.asarray(isis, dtype=np.float64)
    if isis.size == 0:
        return math.nan
    return isis.size / float(isis.sum())


def regularity(isis: np.ndarray) -> float:
    """Coefficient of variation of the intervals with the population standard deviation."""
    isis = np.asarray(isis, dtype=np.float64)
    if isis.size < 2:
        return math.nan
    return float(np.std(isis) / np.mean(isis))


@dataclass
class NeuronFiring:
    layer: int
    neuron: int
    num_spikes: int
    num_isis: int
    rate: float
    regularity: float

    @property
    def log10_rate(self) -> float:
        return math.log10(self.rate) if self.num_isis else math.nan

    @property
    def has_regularity(self) -> bool:
        return self.num_isis >= 2


@dataclass
class LayerFiring:
    layer: int
    neurons: int
    mean_log_rate: float
    mean_regularity: float


@dataclass
class FiringStats:
    neurons: List[NeuronFiring]
    layers: Dict[int, LayerFiring]


def firing_stats(record: SpikeRecord) -> FiringStats:
    """
    Firing rate and regularity per sampled neuron and their per-layer means.

    A neuron's intervals are pooled over every recorded sample; intervals never
    span two samples. Neurons with fewer than two intervals are left out of the
    layer aggregates.
    """
    pooled: Dict[Tuple[int, int], List[np.ndarray]] = defaultdict(list)
    spikes: Dict[Tuple[int, int], int] = defaultdict(int)
    for train in record.trains:
        key = (train.layer, train.neuron)
        pooled[key].append(intervals(train.times))
        spikes[key] += len(train.times)

    neurons = []
    for key in sorted(pooled):
        isis = np.concatenate(pooled[key])
        neurons.append(NeuronFiring(
            layer=key[0],
            neuron=key[1],
            num_spikes=spikes[key],
            num_isis=int(isis.size),
            rate=firing_rate(isis),
            regularity=regularity(isis),
        ))

    layers = {}
    for layer in sorted({n.layer for n in neurons}):
        usable = [n for n in neurons if n.layer == layer and n.has_regularity]
        if not usable:
            layers[layer] = LayerFiring(layer, 0, math.nan, math.nan)
            continue
        layers[layer] = LayerFiring(
            layer=layer,
            neurons=len(usable),
            mean_log_rate=math.fsum(n.log10_rate for n in usable) / len(usable),
            mean_regularity=math.fsum(n.regularity for n in usable) / len(usable),
        )
    return FiringStats(neurons=neurons, layers=layers)
