from typing import Callable, List

import numpy as np
import tensorflow as tf

from scoreflow.errors import CheckpointMismatchError
from scoreflow.model.checkpoint import get_flat_weights, load_checkpoint, save_checkpoint, set_flat_weights
from scoreflow.model.model_mlp import ScoreNetwork
from scoreflow.model.score_model import ScoreModel, TimeLike, broadcast_times
from scoreflow.sde.sde import Sde, check_transition_std, create_sde

SCORE_MLP_TAG = 'score_mlp'


class ScoreMlp(ScoreModel):
    """
    Trainable score model s_theta(x, t), a small MLP conditioned on Fourier features of log t.
    """

    def __init__(self,
                 sde: Sde,
                 dim: int,
                 hidden_units=64,
                 num_layers=3,
                 num_frequencies=8,
                 embedding_scale=1.,
                 scale_by_std=True,
                 seed=0) -> None:
        """
        Initializes the model and builds its weights.

        Args:
            sde: Forward SDE whose perturbed marginals the model approximates.
            dim: Data dimension D.
            hidden_units: Width of each hidden layer.
            num_layers: Number of hidden layers.
            num_frequencies: Number of Fourier frequencies of the time embedding.
            embedding_scale: Scale applied to log t before the Fourier features.
            scale_by_std: Whether the network output is divided by the transition std sigma(t).
            seed: Seed of the weight initializers.
        """

        super().__init__(sde, dim)
        self.hidden_units = hidden_units
        self.num_layers = num_layers
        self.num_frequencies = num_frequencies
        self.embedding_scale = embedding_scale
        self.scale_by_std = scale_by_std
        self.seed = seed
        self.network = ScoreNetwork(dim,
                                    hidden_units=hidden_units,
                                    num_layers=num_layers,
                                    num_frequencies=num_frequencies,
                                    embedding_scale=embedding_scale,
                                    seed=seed)
        # builds the weights eagerly so that traced functions never create variables
        self.network(tf.zeros((1, dim), dtype=tf.float64), tf.ones((1,), dtype=tf.float64))
        self.optimizer = None

    @property
    def layout(self) -> List[List[int]]:
        return [[int(d) for d in v.shape] for v in self.network.trainable_variables]

    @property
    def num_params(self) -> int:
        return int(sum(np.prod(shape) for shape in self.layout))

    def get_flat_params(self) -> np.ndarray:
        return get_flat_weights(self.network.trainable_variables)

    def set_flat_params(self, params: np.ndarray) -> None:
        set_flat_weights(self.network.trainable_variables, params)

    def output_scale(self, t: np.ndarray) -> np.ndarray:
        """
        Per-example factor multiplied onto the network output, 1 / sigma(t) or ones.
        """

        if not self.scale_by_std:
            return np.ones_like(t)
        _, sigma = self.sde.transition_params(t)
        check_transition_std(sigma)
        return 1. / sigma

    def apply(self, x: tf.Tensor, t: tf.Tensor, scale: tf.Tensor) -> tf.Tensor:
        return self.network(x, t) * scale[:, None]

    def score_tensor(self, x, t):
        t = broadcast_times(t, int(x.shape[0]))
        return self.apply(x, tf.constant(t), tf.constant(self.output_scale(t)))

    def score_grad_params(self, x: np.ndarray, t: TimeLike, upstream: np.ndarray) -> np.ndarray:
        """
        Exact gradient of sum(upstream * s_theta(x, t)) with respect to the flat parameter vector.

        Args:
            x: Inputs of shape (N, D) or (D,).
            t: Shared time or times of shape (N,).
            upstream: Cotangent of the same shape as x.

        Returns: Flat gradient vector with the layout of get_flat_params.
        """

        x_batch = tf.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        upstream_batch = tf.constant(np.atleast_2d(np.asarray(upstream, dtype=np.float64)))
        variables = self.network.trainable_variables
        with tf.GradientTape() as tape:
            s = self.score_tensor(x_batch, t)
            objective = tf.reduce_sum(upstream_batch * s)
        gradients = tape.gradient(objective, variables, unconnected_gradients=tf.UnconnectedGradients.ZERO)
        return np.concatenate([g.numpy().ravel() for g in gradients])

    def new_train_step(self,
                       loss_function: Callable[[tf.Tensor, tf.Tensor, tf.Tensor], tf.Tensor],
                       optimizer: tf.keras.optimizers.Optimizer = None,
                       clip_norm=1.,
                       apply_gradients=True) -> Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], float]:
        """
        Creates a step function that evaluates the loss on one batch and optionally updates the weights.

        The returned function takes perturbed inputs x_t (N, D), times t (N,), regression targets (N, D)
        and per-example factors (N,), and returns the loss as float. Non-finite losses are returned
        without touching the weights.
        """

        network = self.network
        optimizer = optimizer or self.optimizer
        if apply_gradients and optimizer is None:
            raise ValueError('Training requires an optimizer, none was given or attached to the model.')

        @tf.function
        def compute_gradients(x_t: tf.Tensor,
                              t: tf.Tensor,
                              scale: tf.Tensor,
                              targets: tf.Tensor,
                              factors: tf.Tensor):
            with tf.GradientTape() as tape:
                scores = self.apply(x_t, t, scale)
                loss = loss_function(targets, scores, factors)
            gradients = tape.gradient(loss, network.trainable_variables)
            return loss, gradients

        def train_step(x_t: np.ndarray, t: np.ndarray, targets: np.ndarray, factors: np.ndarray) -> float:
            t = broadcast_times(t, x_t.shape[0])
            loss, gradients = compute_gradients(tf.constant(x_t, dtype=tf.float64),
                                                tf.constant(t),
                                                tf.constant(self.output_scale(t)),
                                                tf.constant(targets, dtype=tf.float64),
                                                tf.constant(factors, dtype=tf.float64))
            loss = float(loss)
            if apply_gradients and np.isfinite(loss):
                gradients, _ = tf.clip_by_global_norm(gradients, clip_norm)
                optimizer.apply_gradients(zip(gradients, network.trainable_variables))
            return loss

        return train_step

    def header(self) -> dict:
        return {'tag': SCORE_MLP_TAG,
                'dim': self.dim,
                'hidden_units': self.hidden_units,
                'num_layers': self.num_layers,
                'num_frequencies': self.num_frequencies,
                'embedding_scale': float(self.embedding_scale),
                'scale_by_std': bool(self.scale_by_std),
                'seed': self.seed,
                'sde': self.sde.to_config(),
                'layout': self.layout}

    def save(self, out_path: str) -> None:
        save_checkpoint(out_path, self.header(), self.get_flat_params())

    @staticmethod
    def load(in_path: str) -> 'ScoreMlp':
        header, params = load_checkpoint(in_path, expected_tag=SCORE_MLP_TAG)
        model = ScoreMlp(create_sde(header['sde']),
                         dim=header['dim'],
                         hidden_units=header['hidden_units'],
                         num_layers=header['num_layers'],
                         num_frequencies=header['num_frequencies'],
                         embedding_scale=header['embedding_scale'],
                         scale_by_std=header['scale_by_std'],
                         seed=header['seed'])
        if model.layout != header['layout']:
            raise CheckpointMismatchError('Rebuilt layout {} differs from stored layout {}.'.format(
                model.layout, header['layout']))
        model.set_flat_params(params)
        return model
