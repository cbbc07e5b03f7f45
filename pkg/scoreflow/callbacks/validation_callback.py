from typing import Callable

import numpy as np
import tensorflow as tf

from scoreflow.model.score_mlp import ScoreMlp
from scoreflow.objectives import Proposal, denoising_batch
from scoreflow.sde.sde import Sde
from scoreflow.sde.weighting import WeightingScheme
from scoreflow.utils.rng import make_rng


class ValidationCallback(tf.keras.callbacks.Callback):
    """
    Callback for the held-out denoising score matching loss.
    """

    def __init__(self,
                 model: ScoreMlp,
                 val_data: np.ndarray,
                 sde: Sde,
                 scheme: WeightingScheme,
                 proposal: Proposal,
                 loss_function: Callable[[tf.Tensor, tf.Tensor, tf.Tensor], tf.Tensor],
                 batch_size: int,
                 seed=0) -> None:
        """
        Initializes the Callback.

        The perturbations of the validation data are drawn once, so every epoch scores the same
        regression problem.

        Args:
            model: Score model to validate.
            val_data: Held-out samples of shape (N, D).
            sde: Forward SDE.
            scheme: Weighting scheme of the loss.
            proposal: Time proposal of the loss.
            loss_function: Loss function to apply to calculate the validation score.
            batch_size: Batch size of the validation passes.
            seed: Seed of the validation perturbations.
        """

        super().__init__()
        self.batch_size = batch_size
        self.score_model = model
        self.loss_function = loss_function
        self.val_batch = denoising_batch(sde, val_data, make_rng(seed, 'validation'), scheme, proposal,
                                         per_example_times=True)
        self.train_step = model.new_train_step(self.loss_function, apply_gradients=False)

    def on_epoch_end(self, epoch, logs=None) -> None:
        if logs is None:
            logs = {}
        val_loss, count_batches_val = 0., 0
        n = self.val_batch[0].shape[0]
        for start in range(0, n - self.batch_size + 1, self.batch_size):
            val_loss += self.train_step(*(a[start:start + self.batch_size] for a in self.val_batch))
            count_batches_val += 1
        if count_batches_val == 0:
            raise ValueError('Tried to validate on empty validation dataset, possibly due to batch size '
                             'exceeding validation data size.')
        logs['loss_val'] = float(val_loss / count_batches_val)
