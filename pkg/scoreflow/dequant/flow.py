from typing import List, Tuple

import numpy as np
import tensorflow as tf

from scoreflow.errors import CheckpointMismatchError
from scoreflow.model.checkpoint import get_flat_weights, load_checkpoint, save_checkpoint, set_flat_weights
from scoreflow.model.model_mlp import ConditionerNetwork

DEQUANT_FLOW_TAG = 'dequant_flow'

# keeps the base uniforms away from the poles of the logit
MIN_UNIFORM = 1e-12
MAX_NOISE = 1. - 1e-12


def logistic_log_density(z: tf.Tensor) -> tf.Tensor:
    """
    Log-density of the standard logistic distribution summed over the last axis. It equals the
    log-Jacobian of the sigmoid at z.
    """

    return -tf.reduce_sum(tf.nn.softplus(z) + tf.nn.softplus(-z), axis=-1)


class DequantFlow(tf.keras.Model):
    """
    Conditional noise distribution q(u | x) on [0, 1)^D for discrete data x with L levels.

    Logistic base noise z0 is pushed through checkerboard-masked affine couplings, each conditioned on
    the unmasked coordinates and on x, and squashed into the unit cube by a sigmoid. The conditioners
    start with zero output weights, so the initial flow is the identity and q is uniform.
    """

    def __init__(self, dim: int, levels: int, num_couplings=3, hidden_units=64, seed=0) -> None:
        super(DequantFlow, self).__init__(dtype='float64')
        if levels < 2 or num_couplings < 1:
            raise ValueError('Expected levels >= 2 and num_couplings >= 1, got {} and {}.'.format(
                levels, num_couplings))
        self.dim = int(dim)
        self.levels = int(levels)
        self.num_couplings = num_couplings
        self.hidden_units = hidden_units
        self.seed = seed
        self.masks = [tf.constant([float((d + k) % 2) for d in range(self.dim)], dtype=tf.float64)
                      for k in range(num_couplings)]
        self.conditioners = [ConditionerNetwork(self.dim, hidden_units=hidden_units, seed=seed + 10 * k)
                             for k in range(num_couplings)]
        zeros = tf.zeros((1, self.dim), dtype=tf.float64)
        self.transform(zeros, zeros)

    def _context(self, x: tf.Tensor) -> tf.Tensor:
        return tf.cast(x, tf.float64) / self.levels - 0.5

    def _coupling_params(self, k: int, z: tf.Tensor, context: tf.Tensor):
        mask = self.masks[k]
        log_scale, shift = self.conditioners[k](tf.concat([mask * z, context], axis=-1))
        return mask, (1. - mask) * log_scale, (1. - mask) * shift

    def transform(self, z0: tf.Tensor, x: tf.Tensor) -> Tuple[tf.Tensor, tf.Tensor]:
        """
        Applies the couplings to base noise z0 of shape (N, D), returns z and the log-determinant (N,).
        """

        context = self._context(x)
        z, log_det = z0, tf.zeros(tf.shape(z0)[:1], dtype=tf.float64)
        for k in range(self.num_couplings):
            mask, log_scale, shift = self._coupling_params(k, z, context)
            z = mask * z + (1. - mask) * (z * tf.exp(log_scale) + shift)
            log_det += tf.reduce_sum(log_scale, axis=-1)
        return z, log_det

    def inverse_transform(self, z: tf.Tensor, x: tf.Tensor) -> Tuple[tf.Tensor, tf.Tensor]:
        """
        Inverts transform, returns z0 and the log-determinant of the forward couplings.
        """

        context = self._context(x)
        log_det = tf.zeros(tf.shape(z)[:1], dtype=tf.float64)
        for k in reversed(range(self.num_couplings)):
            mask, log_scale, shift = self._coupling_params(k, z, context)
            z = mask * z + (1. - mask) * (z - shift) * tf.exp(-log_scale)
            log_det += tf.reduce_sum(log_scale, axis=-1)
        return z, log_det

    def forward(self, z0: tf.Tensor, x: tf.Tensor) -> Tuple[tf.Tensor, tf.Tensor]:
        """
        Maps base noise to dequantization noise u in [0, 1)^D.

        Returns: u of shape (N, D) and log |det du/dz0| of shape (N,).
        """

        z, log_det = self.transform(z0, x)
        u = tf.minimum(tf.sigmoid(z), MAX_NOISE)
        return u, log_det + logistic_log_density(z)

    def inverse(self, u: tf.Tensor, x: tf.Tensor) -> Tuple[tf.Tensor, tf.Tensor]:
        u = tf.convert_to_tensor(u, dtype=tf.float64)
        z = tf.math.log(u) - tf.math.log1p(-u)
        z0, log_det = self.inverse_transform(z, x)
        return z0, log_det + logistic_log_density(z)

    def log_prob(self, u: tf.Tensor, x: tf.Tensor) -> tf.Tensor:
        """
        Exact log q(u | x) by the change of variables formula.
        """

        z0, log_det = self.inverse(u, x)
        return logistic_log_density(z0) - log_det

    def sample_and_logq_tensor(self, uniforms: tf.Tensor, x: tf.Tensor) -> Tuple[tf.Tensor, tf.Tensor]:
        """
        Reparameterized sample from q(u | x) driven by uniform draws of shape (N, D).
        """

        uniforms = tf.clip_by_value(tf.convert_to_tensor(uniforms, dtype=tf.float64), MIN_UNIFORM, MAX_NOISE)
        z0 = tf.math.log(uniforms) - tf.math.log1p(-uniforms)
        u, log_det = self.forward(z0, x)
        return u, logistic_log_density(z0) - log_det

    def sample_and_logq(self, uniforms: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        u, logq = self.sample_and_logq_tensor(tf.constant(np.atleast_2d(uniforms), dtype=tf.float64),
                                              tf.constant(np.atleast_2d(x), dtype=tf.float64))
        return u.numpy(), logq.numpy()

    @property
    def layout(self) -> List[List[int]]:
        return [[int(d) for d in v.shape] for v in self.trainable_variables]

    def get_flat_params(self) -> np.ndarray:
        return get_flat_weights(self.trainable_variables)

    def set_flat_params(self, params: np.ndarray) -> None:
        set_flat_weights(self.trainable_variables, params)

    def header(self) -> dict:
        return {'tag': DEQUANT_FLOW_TAG,
                'dim': self.dim,
                'levels': self.levels,
                'num_couplings': self.num_couplings,
                'hidden_units': self.hidden_units,
                'seed': self.seed,
                'layout': self.layout}

    def save(self, out_path: str) -> None:
        save_checkpoint(out_path, self.header(), self.get_flat_params())

    @staticmethod
    def load(in_path: str) -> 'DequantFlow':
        header, params = load_checkpoint(in_path, expected_tag=DEQUANT_FLOW_TAG)
        flow = DequantFlow(header['dim'],
                           header['levels'],
                           num_couplings=header['num_couplings'],
                           hidden_units=header['hidden_units'],
                           seed=header['seed'])
        if flow.layout != header['layout']:
            raise CheckpointMismatchError('Rebuilt layout {} differs from stored layout {}.'.format(
                flow.layout, header['layout']))
        flow.set_flat_params(params)
        return flow
