import logging
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from CODING.schemes import BurstState

logger = logging.getLogger(__name__)

ResetMode = Literal["subtract", "zero"]


class SimulationError(RuntimeError):
    """Raised when the simulation produces non-finite values."""


@dataclass
class NeuronLayerState:
    """
    Integrate-and-fire state of one spiking layer for a batch of samples.

    emitted_weight holds the threshold carried by the spike just emitted and is
    0 where the neuron stayed silent.
    """
    v_mem: np.ndarray
    spiked: np.ndarray
    emitted_weight: np.ndarray
    burst: Optional[BurstState] = None

    @classmethod
    def initial(cls, shape, with_burst: bool = False) -> "NeuronLayerState":
        return cls(
            v_mem=np.zeros(shape, dtype=np.float64),
            spiked=np.zeros(shape, dtype=bool),
            emitted_weight=np.zeros(shape, dtype=np.float64),
            burst=BurstState.initial(shape) if with_burst else None,
        )

    def weighted_spikes(self) -> np.ndarray:
        """Spikes scaled by the threshold at emission, as seen by the next layer."""
        return self.emitted_weight


def fire_step(
    state: NeuronLayerState,
    z: np.ndarray,
    v_th: Union[float, np.ndarray],
    reset: ResetMode = "subtract",
    layer: Union[int, str] = "?",
    step: int = -1,
) -> NeuronLayerState:
    """
    Integrate z, fire where the potential reaches V_th(t) and reset.

    A neuron spikes iff v_mem + z - V_th(t) >= 0. Reset-by-subtraction keeps the
    residual v_mem + z - V_th(t); reset "zero" drops it to the resting potential 0.

    Raises:
        SimulationError: If z contains non-finite values
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        error_msg = f"non-finite PSP in layer {layer} at time step {step}"
        logger.error(error_msg)
        raise SimulationError(error_msg)

    potential = state.v_mem + z
    spiked = potential - v_th >= 0.0
    if reset == "subtract":
        v_mem = np.where(spiked, potential - v_th, potential)
    elif reset == "zero":
        v_mem = np.where(spiked, 0.0, potential)
    else:
        raise ValueError(f"unknown reset mode: {reset}")
    emitted = np.where(spiked, v_th, 0.0)
    return NeuronLayerState(v_mem=v_mem, spiked=spiked, emitted_weight=emitted, burst=state.burst)
