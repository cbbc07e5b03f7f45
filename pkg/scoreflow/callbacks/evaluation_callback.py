from typing import Dict

import numpy as np
import tensorflow as tf

from scoreflow.evaluation.scorer import Scorer
from scoreflow.model.score_model import ScoreModel
from scoreflow.utils.logger import get_logger


class EvaluationCallback(tf.keras.callbacks.Callback):
    """
    Callback for held-out likelihood scores.
    """

    def __init__(self,
                 model: ScoreModel,
                 scorers: Dict[str, Scorer],
                 val_data: np.ndarray) -> None:
        """
        Initializes the Callback.

        Args:
            model: Score model to evaluate.
            scorers: Dictionary of {scorer_name: scorer}, where each scorer maps model and data to a score.
            val_data: Held-out samples of shape (N, D).
        """

        super().__init__()
        self.score_model = model
        self.scorers = scorers
        self.val_data = val_data
        self.logger = get_logger(__name__)

    def on_epoch_end(self, epoch, logs=None) -> None:
        if logs is None:
            logs = {}
        for score_name, scorer in self.scorers.items():
            logs[score_name] = float(scorer(self.score_model, self.val_data))
            self.logger.info('{} after epoch {}: {:.5f}'.format(score_name, epoch, logs[score_name]))
