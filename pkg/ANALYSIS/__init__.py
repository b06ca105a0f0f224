from .spikes import burst_composition, firing_stats, isi_histogram
from .energy import DEFAULT_PROFILES, EnergyProfile, normalized_energy, spiking_density
from .metrics import AnalysisError, RunMetrics, TargetMetrics, latency_to_target

__all__ = [
    'burst_composition', 'firing_stats', 'isi_histogram',
    'DEFAULT_PROFILES', 'EnergyProfile', 'normalized_energy', 'spiking_density',
    'AnalysisError', 'RunMetrics', 'TargetMetrics', 'latency_to_target',
]
