import csv
import logging
from typing import Any, Dict, List

import numpy as np
import tensorflow as tf

from scoreflow.callbacks.evaluation_callback import EvaluationCallback
from scoreflow.callbacks.model_checkpoint_callback import ModelCheckpointCallback
from scoreflow.callbacks.validation_callback import ValidationCallback
from scoreflow.data.dataset_generator import DatasetGenerator
from scoreflow.dequant.flow import DequantFlow
from scoreflow.dequant.objective import check_levels, dequant_bound_tensor, draw_dequant_bound
from scoreflow.errors import NonFiniteLossError
from scoreflow.evaluation.scorer import Scorer
from scoreflow.losses import weighted_score_loss
from scoreflow.model.score_mlp import ScoreMlp
from scoreflow.model.score_model import ScoreModel
from scoreflow.objectives import ObjectiveEstimate, Proposal, TimeProposal, denoising_batch
from scoreflow.sde.sde import Sde
from scoreflow.sde.weighting import WeightingScheme
from scoreflow.utils.logger import get_logger, parse_logging_level
from scoreflow.utils.rng import make_rng


def enable_determinism() -> None:
    if hasattr(tf.config.experimental, 'enable_op_determinism'):
        tf.config.experimental.enable_op_determinism()


class Trainer:

    def __init__(self,
                 steps=2000,
                 batch_size=128,
                 learning_rate=1e-3,
                 beta_1=0.9,
                 beta_2=0.999,
                 epsilon=1e-8,
                 clip_norm=1.,
                 eval_every=500,
                 seed=0,
                 scheme='likelihood',
                 proposal='importance',
                 per_example_times=False,
                 shuffle_buffer_size=10000,
                 model_save_path=None,
                 loss_history_path=None,
                 dequant_steps=None,
                 dequant_time_samples=4,
                 steps_to_log=100,
                 logging_level=logging.INFO) -> None:
        """
        Initializes the trainer.

        Args:
            steps: Number of optimizer steps.
            batch_size: Size of mini-batches for stochastic gradient descent.
            learning_rate: Learning rate of Adam.
            beta_1: Decay of the first moment estimates.
            beta_2: Decay of the second moment estimates.
            epsilon: Stabilizer of Adam.
            clip_norm: Maximum global norm of the gradients.
            eval_every: Number of steps to train until callbacks are invoked.
            seed: Seed of the batch order and of all perturbation noise.
            scheme: Weighting scheme, 'original', 'likelihood' or an interpolation coefficient.
            proposal: Time proposal, 'uniform' or 'importance' (requires the likelihood weighting).
            per_example_times: Draw one time per example instead of one per batch.
            shuffle_buffer_size: Size of the buffer for shuffling the training samples.
            model_save_path (optional): Directory of the final checkpoint, the best checkpoint by
                validation loss goes to model_save_path + '_best'.
            loss_history_path (optional): CSV file for the loss history.
            dequant_steps (optional): Number of flow training steps, defaults to steps.
            dequant_time_samples: Time samples per datapoint in the flow objective.
            steps_to_log: Number of steps to wait for logging output.
            logging_level: Level of logging to use, e.g. logging.INFO or logging.DEBUG.
        """

        if steps < 1 or batch_size < 1 or learning_rate <= 0.:
            raise ValueError('Expected positive steps, batch_size and learning_rate, got {}, {} and {}.'.format(
                steps, batch_size, learning_rate))
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self.eval_every = eval_every
        self.seed = seed
        self.scheme = scheme if isinstance(scheme, WeightingScheme) else WeightingScheme.from_config(scheme)
        self.proposal = Proposal(proposal)
        if self.proposal == Proposal.IMPORTANCE and self.scheme.interpolation != 1.:
            raise ValueError('Importance sampled times require the likelihood weighting, got {}.'.format(
                self.scheme))
        self.per_example_times = per_example_times
        self.model_save_path = model_save_path
        self.loss_history_path = loss_history_path
        self.dequant_steps = dequant_steps or steps
        self.dequant_time_samples = dequant_time_samples
        self.loss_function = weighted_score_loss
        self.train_dataset_generator = DatasetGenerator(batch_size=batch_size,
                                                        shuffle_buffer_size=shuffle_buffer_size,
                                                        seed=seed)
        self.logger = get_logger(__name__)
        self.logger.setLevel(logging_level)
        self.steps_to_log = steps_to_log

    @classmethod
    def from_config(cls, cfg: Dict[str, Any], **kwargs) -> 'Trainer':
        """
        Creates a trainer from the train section of an experiment config.
        """

        cfg = dict(cfg)
        logging_level = parse_logging_level(cfg.pop('logging_level', 'info'))
        return Trainer(logging_level=logging_level, **cfg, **kwargs)

    def new_optimizer(self) -> tf.keras.optimizers.Optimizer:
        return tf.keras.optimizers.Adam(learning_rate=self.learning_rate,
                                        beta_1=self.beta_1,
                                        beta_2=self.beta_2,
                                        epsilon=self.epsilon)

    def train_score_model(self,
                          model: ScoreMlp,
                          train_data: np.ndarray,
                          val_data: np.ndarray = None,
                          scorers: Dict[str, Scorer] = None,
                          callbacks: List[tf.keras.callbacks.Callback] = None) -> List[ObjectiveEstimate]:
        """
        Trains a score model with Adam on the Monte Carlo denoising score matching objective.

        Args:
            model: Model to train, freshly created or loaded.
            train_data: Continuous training samples of shape (N, D), discrete data must be dequantized first.
            val_data (optional): Held-out samples for validation loss, scores and best checkpoint.
            scorers (optional): Dictionary with {score_name, scorer} to add held-out scores to the logs.
            callbacks (optional): Additional custom callbacks.

        Returns: One ObjectiveEstimate per step.
        """

        if np.issubdtype(np.asarray(train_data).dtype, np.integer):
            raise ValueError('Training needs continuous data, dequantize discrete samples first.')
        enable_determinism()
        sde = model.sde
        rng = make_rng(self.seed, 'train_noise')
        time_proposal = TimeProposal(sde) if self.proposal == Proposal.IMPORTANCE else None
        model.optimizer = self.new_optimizer()
        train_dataset = self.train_dataset_generator(train_data)

        train_callbacks = list(callbacks or [])
        if val_data is not None:
            train_callbacks.extend([
                EvaluationCallback(model=model,
                                   scorers=scorers or {},
                                   val_data=val_data),
                ValidationCallback(model=model,
                                   val_data=val_data,
                                   sde=sde,
                                   scheme=self.scheme,
                                   proposal=self.proposal,
                                   loss_function=self.loss_function,
                                   batch_size=min(self.batch_size, len(val_data)),
                                   seed=self.seed),
                ModelCheckpointCallback(file_path=None if self.model_save_path is None
                                        else self.model_save_path + '_best',
                                        model=model,
                                        monitor='loss_val',
                                        mode='min')
            ])
        logs = {}
        history, train_losses = [], []
        step, epoch_count = 0, 0
        train_step = model.new_train_step(self.loss_function, clip_norm=self.clip_norm, apply_gradients=True)
        while step < self.steps:
            for batch_index, x0 in enumerate(train_dataset.take(-1)):
                x_t, t, targets, factors = denoising_batch(sde, x0.numpy(), rng, self.scheme, self.proposal,
                                                           self.per_example_times, time_proposal)
                current_loss = train_step(x_t, t, targets, factors)
                step += 1
                if not np.isfinite(current_loss):
                    raise NonFiniteLossError('Loss is {} at step {} (batch {} of epoch {}), times in [{:.3g}, {:.3g}].'
                                             .format(current_loss, step, batch_index, epoch_count,
                                                     np.min(t), np.max(t)))
                history.append(ObjectiveEstimate(current_loss, t, factors, self.proposal))
                train_losses.append(current_loss)
                logs['loss'] = float(sum(train_losses)) / len(train_losses)
                if step % self.steps_to_log == 0:
                    self.logger.info('step {step}, epoch {epoch}, logs: {logs}'.format(step=step,
                                                                                       epoch=epoch_count,
                                                                                       logs=logs))
                if step % self.eval_every == 0:
                    train_losses.clear()
                    for callback in train_callbacks:
                        callback.on_epoch_end(step // self.eval_every, logs=logs)
                if step >= self.steps:
                    break
            epoch_count += 1
            if step == 0:
                raise ValueError('Iterating over the dataset yielded zero batches!')
        self.logger.info('finished training, total steps: {}'.format(step))

        if self.loss_history_path is not None:
            self.write_loss_history(history, self.loss_history_path)
        if self.model_save_path is not None:
            self.logger.info('saving final model to {}'.format(self.model_save_path))
            model.save(self.model_save_path)
        return history

    def write_loss_history(self, history: List[ObjectiveEstimate], out_path: str) -> None:
        with open(out_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['step', 'loss', 'scheme', 'proposal'])
            for step, estimate in enumerate(history, start=1):
                writer.writerow([step, repr(estimate.value), self.scheme.name, estimate.proposal.value])

    def train_dequant_flow(self,
                           flow: DequantFlow,
                           score_model: ScoreModel,
                           sde: Sde,
                           train_data: np.ndarray,
                           flow_save_path: str = None) -> List[float]:
        """
        Trains the dequantization flow on the dequantized bound while the score model stays frozen.

        Args:
            flow: Flow to train.
            score_model: Score model of the uniformly dequantized data, its parameters are never updated.
            sde: Forward SDE.
            train_data: Integer training samples of shape (N, D) with values in [0, flow.levels).
            flow_save_path (optional): Directory for the final flow checkpoint.

        Returns: Loss per step, each a bound on the discrete negative log-likelihood in nats.
        """

        check_levels(train_data, flow.levels)
        enable_determinism()
        rng = make_rng(self.seed, 'dequant_noise')
        optimizer = self.new_optimizer()
        train_dataset = self.train_dataset_generator(train_data)
        variables = flow.trainable_variables
        history, ema = [], None
        step = 0
        while step < self.dequant_steps:
            for x in train_dataset.take(-1):
                x = x.numpy()
                draws = draw_dequant_bound(sde, x.shape[0], x.shape[1], rng, self.dequant_time_samples)
                with tf.GradientTape() as tape:
                    loss = tf.reduce_mean(dequant_bound_tensor(flow, score_model, sde, x, flow.levels, draws))
                current_loss = float(loss)
                step += 1
                if not np.isfinite(current_loss):
                    raise NonFiniteLossError('Dequantization loss is {} at step {}.'.format(current_loss, step))
                gradients = tape.gradient(loss, variables)
                gradients, _ = tf.clip_by_global_norm(gradients, self.clip_norm)
                optimizer.apply_gradients(zip(gradients, variables))
                history.append(current_loss)
                ema = current_loss if ema is None else 0.99 * ema + 0.01 * current_loss
                if step % self.steps_to_log == 0:
                    self.logger.info('dequant step {}, loss ema {:.5f}'.format(step, ema))
                if step >= self.dequant_steps:
                    break
            if step == 0:
                raise ValueError('Iterating over the dataset yielded zero batches!')
        if flow_save_path is not None:
            self.logger.info('saving dequantization flow to {}'.format(flow_save_path))
            flow.save(flow_save_path)
        return history
