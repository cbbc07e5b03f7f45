import abc

import numpy as np

from scoreflow.model.score_model import ScoreModel


class Scorer(abc.ABC):

    def __call__(self, model: ScoreModel, data: np.ndarray) -> float:
        """
        Evaluates a score model on held-out data.

        Args:
            model: Score model to evaluate.
            data: Held-out samples of shape (N, D).

        Returns: Score as float, e.g. the mean negative log-likelihood in nats.
        """

        raise NotImplementedError()
