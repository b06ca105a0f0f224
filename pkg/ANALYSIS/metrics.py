import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .energy import EnergyProfile, InferenceCost, normalized_energy, spiking_density

logger = logging.getLogger(__name__)

REACHED = "reached"
FAILED = "failed"


class AnalysisError(ValueError):
    """Raised when run artifacts are missing, incomplete or inconsistent."""


def latency_to_target(accuracies: Sequence[float], target: float) -> Optional[int]:
    """
    First elapsed time step (1-based) whose accuracy reaches `target`, or None.

    >>> latency_to_target([0.2, 0.8, 0.9], 0.85)
    3
    """
    reached = np.nonzero(np.asarray(accuracies, dtype=np.float64) >= target)[0]
    return int(reached[0]) + 1 if reached.size else None


def resolve_targets(
    dnn_accuracy: float,
    absolute: Iterable[float] = (),
    margins: Iterable[float] = (),
) -> List[float]:
    """
    Absolute targets plus (DNN accuracy - margin) targets, deduplicated, ascending.

    Targets are rounded to 9 significant digits so the value written to CSV is the value compared.
    """
    targets = set(float(f"{t:.9g}") for t in absolute)
    for margin in margins:
        target = dnn_accuracy - margin
        if target <= 0.0:
            logger.warning(f"Dropping relative target {dnn_accuracy} - {margin}: not a positive accuracy")
            continue
        targets.add(float(f"{target:.9g}"))
    return sorted(targets)


@dataclass
class TargetMetrics:
    """
    Cost of reaching one target accuracy.

    total_spikes and hidden_spikes are per image at the latency, or at the
    horizon when the target was never reached (latency None).
    """
    target: float
    latency: Optional[int]
    step: int
    snn_accuracy: float
    total_spikes: float
    hidden_spikes: float
    num_neurons: int
    spiking_density: float

    @property
    def status(self) -> str:
        return REACHED if self.latency is not None else FAILED

    @property
    def reached(self) -> bool:
        return self.latency is not None


@dataclass
class RunMetrics:
    """
    Per-step results of one evaluation run.

    accuracy[t-1] is the accuracy after t elapsed steps. cumulative_spikes and
    cumulative_hidden_spikes are summed over the evaluation set; the first counts
    the input layer too when it spikes.
    """
    accuracy: np.ndarray
    cumulative_spikes: np.ndarray
    cumulative_hidden_spikes: np.ndarray
    num_images: int
    num_neurons: int
    dnn_accuracy: float

    def __post_init__(self):
        self.accuracy = np.asarray(self.accuracy, dtype=np.float64)
        self.cumulative_spikes = np.asarray(self.cumulative_spikes, dtype=np.int64)
        self.cumulative_hidden_spikes = np.asarray(self.cumulative_hidden_spikes, dtype=np.int64)
        if not (len(self.accuracy) == len(self.cumulative_spikes) == len(self.cumulative_hidden_spikes)):
            raise AnalysisError("per-step series have different lengths")
        if len(self.accuracy) == 0:
            raise AnalysisError("run has no time steps")
        if self.num_images < 1:
            raise AnalysisError(f"num_images must be >= 1, got {self.num_images}")
        if np.any(np.diff(self.cumulative_spikes) < 0):
            raise AnalysisError("cumulative spike counts decrease")

    @classmethod
    def from_counts(
        cls,
        correct: np.ndarray,
        layer_spikes: np.ndarray,
        num_images: int,
        num_neurons: int,
        dnn_accuracy: float,
        input_spiking: bool,
    ) -> "RunMetrics":
        """
        Build metrics from per-step totals over the evaluation set.

        correct: (T,) correctly classified images after each elapsed step.
        layer_spikes: (T, layers) spikes per step, column 0 the input layer.
        """
        layer_spikes = np.asarray(layer_spikes, dtype=np.int64)
        hidden = layer_spikes[:, 1:].sum(axis=1)
        total = hidden + (layer_spikes[:, 0] if input_spiking else 0)
        return cls(
            accuracy=np.asarray(correct, dtype=np.float64) / num_images,
            cumulative_spikes=np.cumsum(total),
            cumulative_hidden_spikes=np.cumsum(hidden),
            num_images=num_images,
            num_neurons=num_neurons,
            dnn_accuracy=dnn_accuracy,
        )

    @property
    def horizon(self) -> int:
        return len(self.accuracy)

    @property
    def final_accuracy(self) -> float:
        return float(self.accuracy[-1])

    def spikes_per_image(self, step: int) -> float:
        return float(self.cumulative_spikes[step - 1]) / self.num_images

    def reported_accuracy(self) -> np.ndarray:
        """Accuracies as written to inference_curve.csv (9 significant digits)."""
        return np.array([float(f"{a:.9g}") for a in self.accuracy])

    def at_target(self, target: float) -> TargetMetrics:
        """Latency is read off the reported accuracies so it matches a recomputation from the CSV."""
        latency = latency_to_target(self.reported_accuracy(), target)
        step = latency if latency is not None else self.horizon
        if latency is None:
            logger.warning(f"Target accuracy {target:.9g} not reached within {self.horizon} time steps")
        total = self.spikes_per_image(step)
        return TargetMetrics(
            target=target,
            latency=latency,
            step=step,
            snn_accuracy=float(self.accuracy[step - 1]),
            total_spikes=total,
            hidden_spikes=float(self.cumulative_hidden_spikes[step - 1]) / self.num_images,
            num_neurons=self.num_neurons,
            spiking_density=spiking_density(total, self.num_neurons, step),
        )


def energy_columns(
    metrics: InferenceCost,
    baseline: Optional[InferenceCost],
    profiles: Sequence[EnergyProfile],
) -> Dict[str, Optional[float]]:
    """Normalized energy per profile; None where either side failed its target or no baseline is given."""
    columns: Dict[str, Optional[float]] = {}
    for profile in profiles:
        key = f"energy_{profile.name}"
        if baseline is None or baseline.latency is None or metrics.latency is None:
            columns[key] = None
            continue
        columns[key] = normalized_energy(metrics, baseline, profile)
    return columns
