from .network import ConversionError, SnnNetwork, convert, psp_step
from .neurons import NeuronLayerState, SimulationError, fire_step
from .simulate import RecordSettings, SpikeRecord, SpikeTrain, classify_at, simulate

__all__ = [
    'ConversionError', 'SnnNetwork', 'convert', 'psp_step',
    'NeuronLayerState', 'SimulationError', 'fire_step',
    'RecordSettings', 'SpikeRecord', 'SpikeTrain', 'classify_at', 'simulate',
]
