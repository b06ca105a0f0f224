from .schemes import CodingKind, CodingScheme, BurstState, burst_update, phase_weight, threshold_at
from .encoders import InputEncoder, encode_input_phase, encode_input_rate, encode_input_real

__all__ = [
    'CodingKind', 'CodingScheme', 'BurstState', 'burst_update', 'phase_weight', 'threshold_at',
    'InputEncoder', 'encode_input_phase', 'encode_input_rate', 'encode_input_real',
]
