import logging
import math
from typing import Protocol, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12


class EnergyProfile(BaseModel):
    """
    Shares of computation, routing and static energy of a neuromorphic platform.

    Computation energy scales with spike count, routing with spiking density and
    static energy with latency.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    ratios: Tuple[float, float, float]

    @field_validator("ratios")
    @classmethod
    def _on_simplex(cls, ratios):
        if any(r < 0 for r in ratios):
            raise ValueError(f"energy ratios must be non-negative, got {ratios}")
        if abs(math.fsum(ratios) - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"energy ratios must sum to 1, got {math.fsum(ratios)!r}")
        return ratios

    @property
    def r_comp(self) -> float:
        return self.ratios[0]

    @property
    def r_route(self) -> float:
        return self.ratios[1]

    @property
    def r_static(self) -> float:
        return self.ratios[2]


# Assumed platform shares; not published values.
DEFAULT_PROFILES = (
    EnergyProfile(name="truenorth-like", ratios=(0.15, 0.45, 0.40)),
    EnergyProfile(name="spinnaker-like", ratios=(0.30, 0.30, 0.40)),
)


class InferenceCost(Protocol):
    total_spikes: float
    spiking_density: float
    latency: int


def spiking_density(total_spikes: float, num_neurons: int, latency: int) -> float:
    """Spikes per image divided by (neurons x latency): expected spikes per neuron per step."""
    if num_neurons < 1:
        raise ValueError(f"num_neurons must be >= 1, got {num_neurons}")
    if latency < 1:
        raise ValueError(f"latency must be >= 1, got {latency}")
    return total_spikes / (num_neurons * latency)


def normalized_energy(metrics: InferenceCost, baseline: InferenceCost, profile: EnergyProfile) -> float:
    """
    Energy relative to a baseline run.

    E = r_comp * S/S_b + r_route * D/D_b + r_static * L/L_b with S spikes per
    image, D spiking density and L latency; the baseline itself scores 1.

    Raises:
        ValueError: If a baseline component is zero or missing
    """
    components = (
        ("total_spikes", metrics.total_spikes, baseline.total_spikes),
        ("spiking_density", metrics.spiking_density, baseline.spiking_density),
        ("latency", metrics.latency, baseline.latency),
    )
    terms = []
    for (name, value, reference), share in zip(components, profile.ratios):
        if reference is None or reference == 0:
            raise ValueError(f"baseline {name} is {reference}; the energy ratio is undefined")
        if value is None:
            raise ValueError(f"{name} is missing")
        terms.append(share * (value / reference))
    return math.fsum(terms)
