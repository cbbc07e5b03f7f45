from typing import Tuple

import numpy as np
import tensorflow as tf

from scoreflow.model.checkpoint import load_checkpoint, save_checkpoint
from scoreflow.model.score_model import ScoreModel, TimeLike
from scoreflow.sde.sde import Sde, create_sde, expand_like

ANALYTIC_GAUSSIAN_TAG = 'analytic_gaussian'


class AnalyticGaussian(ScoreModel):
    """
    Exact score of Gaussian data N(mu0, diag(var0)) perturbed by a linear SDE, optionally shifted by a
    constant offset c, i.e. s(x, t) = grad log p_t(x) + c.
    """

    def __init__(self, sde: Sde, mu0: np.ndarray, var0: np.ndarray, offset: np.ndarray = None) -> None:
        mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
        var0 = np.broadcast_to(np.asarray(var0, dtype=np.float64), mu0.shape).copy()
        if np.any(var0 <= 0.):
            raise ValueError('AnalyticGaussian variances must be strictly positive, got {}.'.format(var0))
        super().__init__(sde, dim=mu0.shape[0])
        self.mu0 = mu0
        self.var0 = var0
        self.offset = np.zeros_like(mu0) if offset is None else np.broadcast_to(offset, mu0.shape).astype(np.float64)

    def analytic_pt(self, t: TimeLike) -> Tuple[np.ndarray, np.ndarray]:
        """
        Mean and diagonal variance of the perturbed marginal p_t = N(alpha mu0, alpha^2 var0 + sigma^2).
        For an array of times the results have shape (N, D).
        """

        alpha, sigma = self.sde.transition_params(t)
        alpha, sigma = expand_like(alpha, self.mu0[None, :]), expand_like(sigma, self.mu0[None, :])
        return alpha * self.mu0, alpha ** 2 * self.var0 + sigma ** 2

    def affine_coefficients(self, t: TimeLike) -> Tuple[np.ndarray, np.ndarray]:
        """
        Slope and intercept of the score, s(x, t) = slope * x + intercept (elementwise).
        """

        mean, variance = self.analytic_pt(t)
        return -1. / variance, mean / variance + self.offset

    def score(self, x, t):
        slope, intercept = self.affine_coefficients(t)
        return slope * np.asarray(x, dtype=np.float64) + intercept

    def score_tensor(self, x, t):
        slope, intercept = self.affine_coefficients(t)
        return tf.constant(slope) * x + tf.constant(intercept)

    def score_vjp(self, x, t, v):
        slope, _ = self.affine_coefficients(t)
        return np.broadcast_to(slope * v, np.shape(x)).copy()

    def score_divergence(self, x, t):
        slope, _ = self.affine_coefficients(t)
        divergence = np.sum(slope, axis=-1)
        if np.ndim(x) > 1:
            return np.broadcast_to(divergence, np.shape(x)[:1]).copy()
        return float(divergence)

    def logpdf(self, x: np.ndarray, t: TimeLike) -> np.ndarray:
        """
        Exact log-density of p_t at x.
        """

        mean, variance = self.analytic_pt(t)
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * np.sum(np.log(2. * np.pi * variance) + (x - mean) ** 2 / variance, axis=-1)

    def header(self) -> dict:
        return {'tag': ANALYTIC_GAUSSIAN_TAG,
                'dim': self.dim,
                'sde': self.sde.to_config(),
                'layout': [[self.dim], [self.dim], [self.dim]]}

    def save(self, out_path: str) -> None:
        save_checkpoint(out_path, self.header(), np.concatenate([self.mu0, self.var0, self.offset]))

    @staticmethod
    def load(in_path: str) -> 'AnalyticGaussian':
        header, params = load_checkpoint(in_path, expected_tag=ANALYTIC_GAUSSIAN_TAG)
        mu0, var0, offset = np.split(params, 3)
        return AnalyticGaussian(create_sde(header['sde']), mu0, var0, offset=offset)
