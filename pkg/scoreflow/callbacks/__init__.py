from .evaluation_callback import EvaluationCallback
from .model_checkpoint_callback import ModelCheckpointCallback
from .validation_callback import ValidationCallback
