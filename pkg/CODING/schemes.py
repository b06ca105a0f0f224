import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DEFAULT_BETA = 2.0


class CodingKind(str, Enum):
    REAL = "real"
    RATE = "rate"
    PHASE = "phase"
    BURST = "burst"


class CodingScheme(BaseModel):
    """
    Coding configuration of one layer group (input or hidden).

    `v_th` may be left unset in configuration files; ExperimentConfig resolves it
    before the scheme reaches the simulator.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: CodingKind
    k: Optional[int] = Field(None, ge=1, description="Phase period (phase only)")
    beta: Optional[float] = Field(None, gt=1.0, description="Burst constant (burst only)")
    g_cap: Optional[float] = Field(None, gt=1.0, description="Ceiling of the burst gain g")
    v_th: Optional[float] = Field(None, gt=0.0, description="Threshold constant")

    @model_validator(mode="before")
    @classmethod
    def _default_beta(cls, data):
        if isinstance(data, dict) and data.get("kind") in ("burst", CodingKind.BURST) and data.get("beta") is None:
            data = {**data, "beta": DEFAULT_BETA}
        return data

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "CodingScheme":
        if self.kind == CodingKind.PHASE and self.k is None:
            raise ValueError("phase coding requires the period k")
        if self.kind != CodingKind.PHASE and self.k is not None:
            raise ValueError(f"k is only valid for phase coding, not {self.kind.value}")
        if self.kind != CodingKind.BURST and (self.beta is not None or self.g_cap is not None):
            raise ValueError(f"beta and g_cap are only valid for burst coding, not {self.kind.value}")
        return self

    @classmethod
    def real(cls) -> "CodingScheme":
        return cls(kind=CodingKind.REAL, v_th=1.0)

    @classmethod
    def rate(cls, v_th: float = 1.0) -> "CodingScheme":
        return cls(kind=CodingKind.RATE, v_th=v_th)

    @classmethod
    def phase(cls, k: int = 8, v_th: Optional[float] = None) -> "CodingScheme":
        return cls(kind=CodingKind.PHASE, k=k, v_th=v_th)

    @classmethod
    def burst(cls, v_th: float = 0.125, beta: float = DEFAULT_BETA, g_cap: Optional[float] = None) -> "CodingScheme":
        return cls(kind=CodingKind.BURST, v_th=v_th, beta=beta, g_cap=g_cap)

    def with_v_th(self, v_th: float) -> "CodingScheme":
        return self.model_copy(update={"v_th": float(v_th)})

    @property
    def threshold(self) -> float:
        if self.v_th is None:
            raise ValueError(f"{self.kind.value} coding scheme has no threshold constant")
        return self.v_th

    def label(self) -> str:
        if self.kind == CodingKind.PHASE:
            return f"phase(k={self.k})"
        if self.kind == CodingKind.BURST:
            cap = f", cap={self.g_cap:g}" if self.g_cap is not None else ""
            return f"burst(beta={self.beta:g}{cap})"
        return self.kind.value


def phase_weight(t: int, k: int) -> float:
    """Oscillation value 2^-(1 + t mod k) of the global phase reference at step t."""
    return 2.0 ** -(1 + t % k)


@dataclass
class BurstState:
    """Per-neuron burst gain g and whether the neuron spiked at the previous step."""
    g: np.ndarray
    last_spiked: np.ndarray

    @classmethod
    def initial(cls, shape) -> "BurstState":
        return cls(g=np.ones(shape, dtype=np.float64), last_spiked=np.zeros(shape, dtype=bool))


def burst_update(
    state: BurstState,
    spiked: np.ndarray,
    beta: float,
    g_cap: Optional[float] = None,
) -> BurstState:
    """Gain for the next step: beta * g (capped) where the neuron just spiked, else 1."""
    spiked = np.asarray(spiked, dtype=bool)
    grown = beta * state.g
    if g_cap is not None:
        grown = np.minimum(grown, g_cap)
    return BurstState(g=np.where(spiked, grown, 1.0), last_spiked=spiked.copy())


def threshold_at(
    scheme: CodingScheme,
    t: int,
    state: Optional[BurstState] = None,
) -> Union[float, np.ndarray]:
    """
    Threshold V_th(t) of a spiking layer.

    Rate and phase schedules are global and returned as a scalar that broadcasts
    over the layer; burst thresholds are per neuron and need the BurstState.
    """
    if scheme.kind == CodingKind.RATE:
        return scheme.threshold
    if scheme.kind == CodingKind.PHASE:
        return phase_weight(t, scheme.k) * scheme.threshold
    if scheme.kind == CodingKind.BURST:
        if state is None:
            raise ValueError("burst thresholds need the layer's BurstState")
        return state.g * scheme.threshold
    raise ValueError("real coding has no threshold schedule; it is valid only for input injection")
