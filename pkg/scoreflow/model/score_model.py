import abc
from abc import abstractmethod
from typing import Union

import numpy as np
import tensorflow as tf

from scoreflow.sde.sde import Sde

TimeLike = Union[float, np.ndarray]


def broadcast_times(t: TimeLike, batch_size: int) -> np.ndarray:
    """
    Returns the times as a float64 array of shape (batch_size,).
    """

    return np.broadcast_to(np.asarray(t, dtype=np.float64), (batch_size,)).copy()


class ScoreModel(abc.ABC):
    """
    Time-conditioned vector field s(x, t) approximating the score of the perturbed data marginals.

    Inputs are batches of shape (N, D) with either one shared time or one time per row. A single
    vector of shape (D,) is accepted as well and returns an output of the same shape.
    """

    def __init__(self, sde: Sde, dim: int) -> None:
        self.sde = sde
        self.dim = int(dim)

    @abstractmethod
    def score_tensor(self, x: tf.Tensor, t: TimeLike) -> tf.Tensor:
        """
        Evaluates the score on a float64 tensor so that gradients flow back into x and the parameters.

        Args:
            x: Tensor of shape (N, D).
            t: Shared time or array of shape (N,); times never carry gradients.

        Returns: Tensor of shape (N, D).
        """

        pass

    def score(self, x: np.ndarray, t: TimeLike) -> np.ndarray:
        x_batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
        result = self.score_tensor(tf.constant(x_batch), t).numpy()
        return result.reshape(np.shape(x))

    def score_vjp(self, x: np.ndarray, t: TimeLike, v: np.ndarray) -> np.ndarray:
        """
        Vector-Jacobian product v^T (ds/dx) per row, computed by reverse-mode differentiation.
        """

        x_batch = tf.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        with tf.GradientTape() as tape:
            tape.watch(x_batch)
            s = self.score_tensor(x_batch, t)
        v_batch = tf.constant(np.broadcast_to(v, x_batch.shape), dtype=tf.float64)
        return tape.gradient(s, x_batch, output_gradients=v_batch).numpy().reshape(np.shape(x))

    def score_divergence(self, x: np.ndarray, t: TimeLike) -> np.ndarray:
        """
        Exact divergence of the score per row, the trace of the batch Jacobian.
        """

        x_batch = tf.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        with tf.GradientTape() as tape:
            tape.watch(x_batch)
            s = self.score_tensor(x_batch, t)
        jacobian = tape.batch_jacobian(s, x_batch)
        divergence = tf.linalg.trace(jacobian).numpy()
        return divergence if np.ndim(x) > 1 else divergence[0]
