from .forward import ShapeError, dnn_forward, predict, accuracy
from .train import TrainSettings, LayerPlan, TrainingError, init_model, train
from .gradcheck import gradient_check
from .normalize import NormalizationError, nearest_rank_percentile, record_activations, normalize_model

__all__ = [
    'ShapeError', 'dnn_forward', 'predict', 'accuracy',
    'TrainSettings', 'LayerPlan', 'TrainingError', 'init_model', 'train',
    'gradient_check',
    'NormalizationError', 'nearest_rank_percentile', 'record_activations', 'normalize_model',
]
