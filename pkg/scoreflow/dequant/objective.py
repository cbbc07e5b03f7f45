from typing import NamedTuple, Optional, Tuple

import numpy as np
import tensorflow as tf

from scoreflow.dequant.flow import DequantFlow
from scoreflow.evaluation.bounds import draw_bound_times
from scoreflow.model.score_model import ScoreModel
from scoreflow.sde.sde import Sde, check_transition_std


class BoundDraws(NamedTuple):
    """
    Random numbers of one dequantized bound evaluation for N datapoints and M time samples each.
    """

    uniforms: np.ndarray  # (N, D)
    t: np.ndarray  # (N, M)
    factors: np.ndarray  # (N, M)
    noise: np.ndarray  # (N, M, D)
    correction_noise: np.ndarray  # (N, D)


def check_levels(x_discrete: np.ndarray, levels: int) -> np.ndarray:
    x = np.asarray(x_discrete)
    if np.any(x < 0) or np.any(x >= levels) or np.any(np.floor(x) != x):
        raise ValueError('Discrete data must hold integers in [0, {}), got values in [{}, {}].'.format(
            levels, np.min(x), np.max(x)))
    return x.astype(np.float64)


def uniform_dequantize(x_discrete: np.ndarray, levels: int, rng: np.random.Generator) -> np.ndarray:
    """
    Maps integer data in {0, ..., L-1} to (x + u) / L with u ~ U[0, 1)^D.
    """

    x = check_levels(x_discrete, levels)
    return (x + rng.uniform(size=x.shape)) / levels


def var_deq_sample_and_logq(flow: DequantFlow,
                            x_discrete: np.ndarray,
                            rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draws dequantization noise u ~ q(u | x) and its exact log-density.

    Args:
        flow: Conditional noise flow.
        x_discrete: Integer vector (D,) or batch (N, D).
        rng: Generator for the base noise.

    Returns: u with the shape of x_discrete and log q(u | x), a float for a single vector.
    """

    x = check_levels(x_discrete, flow.levels)
    u, logq = flow.sample_and_logq(rng.uniform(size=x.shape), x)
    if x.ndim == 1:
        return u[0], float(logq[0])
    return u, logq


def draw_dequant_bound(sde: Sde,
                       n: int,
                       dim: int,
                       rng: np.random.Generator,
                       n_time_samples=1,
                       use_importance=True) -> BoundDraws:
    """
    Draws the noise of one bound evaluation. The dequantization uniforms come first, so the uniform and the
    variational objective consume the same stream.
    """

    uniforms = rng.uniform(size=(n, dim))
    t, factors = draw_bound_times(sde, n * n_time_samples, rng, use_importance)
    noise = rng.standard_normal((n, n_time_samples, dim))
    correction_noise = rng.standard_normal((n, dim))
    return BoundDraws(uniforms,
                      t.reshape(n, n_time_samples),
                      factors.reshape(n, n_time_samples),
                      noise,
                      correction_noise)


def corrected_bound_tensor(score_model: ScoreModel, sde: Sde, y: tf.Tensor, draws: BoundDraws) -> tf.Tensor:
    """
    Tweedie-corrected denoising bound on -log p(y) for continuous points y of shape (N, D), differentiable
    in y. The times and perturbation noise are fixed by the draws.
    """

    n, m, dim = draws.noise.shape
    # closed-form prior cross-entropy
    alpha_T, sigma_T = sde.transition_params(sde.T)
    prior_var = sde.prior_variance
    prior_term = 0.5 * dim * np.log(2. * np.pi * prior_var) + \
        0.5 * (alpha_T ** 2 * tf.reduce_sum(y ** 2, axis=-1) + dim * sigma_T ** 2) / prior_var

    t = draws.t.ravel()
    alpha, sigma = sde.transition_params(t)
    check_transition_std(sigma)
    noise = tf.constant(draws.noise.reshape(n * m, dim))
    y_rep = tf.repeat(y, m, axis=0)
    x_t = tf.constant(alpha[:, None]) * y_rep + tf.constant(sigma[:, None]) * noise
    s = score_model.score_tensor(x_t, t)
    combined = tf.reduce_sum(s ** 2, axis=-1) + 2. * tf.reduce_sum(s * noise, axis=-1) / tf.constant(sigma)
    integrand = 0.5 * (tf.constant(sde.diffusion(t) ** 2) * combined - 2. * sde.drift_divergence(t, dim))
    weighted = tf.reshape(tf.constant(draws.factors.ravel()) * integrand, (n, m))
    time_term = tf.reduce_mean(weighted, axis=-1)

    alpha_eps, sigma_eps = sde.transition_params(sde.epsilon)
    check_transition_std(sigma_eps)
    z = tf.constant(draws.correction_noise)
    s_eps = score_model.score_tensor(alpha_eps * y + sigma_eps * z, sde.epsilon)
    correction = -dim * np.log(alpha_eps) + \
        0.5 * (tf.reduce_sum((z + sigma_eps * s_eps) ** 2, axis=-1) - tf.reduce_sum(z ** 2, axis=-1))
    return prior_term + time_term + correction


def dequant_bound_tensor(flow: Optional[DequantFlow],
                         score_model: ScoreModel,
                         sde: Sde,
                         x: np.ndarray,
                         levels: int,
                         draws: BoundDraws) -> tf.Tensor:
    """
    Per-point bound on -log P(x) of discrete data, bound(y) + D log L + log q(u | x) with y = (x + u) / L.
    Without a flow the noise is uniform and log q vanishes.
    """

    dim = x.shape[-1]
    if flow is None:
        u = tf.constant(draws.uniforms)
        logq = tf.zeros((x.shape[0],), dtype=tf.float64)
    else:
        u, logq = flow.sample_and_logq_tensor(draws.uniforms, tf.constant(x))
    y = (tf.constant(x) + u) / levels
    return corrected_bound_tensor(score_model, sde, y, draws) + dim * np.log(levels) + logq


def dequant_bound_samples(flow: Optional[DequantFlow],
                          score_model: ScoreModel,
                          sde: Sde,
                          x_discrete: np.ndarray,
                          levels: int,
                          rng: np.random.Generator,
                          n_time_samples=1,
                          use_importance=True) -> np.ndarray:
    x = np.atleast_2d(check_levels(x_discrete, levels))
    draws = draw_dequant_bound(sde, x.shape[0], x.shape[1], rng, n_time_samples, use_importance)
    return dequant_bound_tensor(flow, score_model, sde, x, levels, draws).numpy()


def var_deq_objective(flow: DequantFlow,
                      score_model: ScoreModel,
                      sde: Sde,
                      x_discrete: np.ndarray,
                      rng: np.random.Generator,
                      n_time_samples=1,
                      use_importance=True) -> float:
    """
    Negated variational dequantization objective, E_q[-log p(y) + D log L + log q(u | x)] with -log p(y)
    replaced by the Tweedie-corrected denoising bound, averaged over the rows of x_discrete.

    Args:
        flow: Noise flow q(u | x).
        score_model: Frozen score model of the dequantized data.
        sde: Forward SDE.
        x_discrete: Integer data of shape (D,) or (N, D).
        rng: Generator for dequantization noise, times and perturbations.
        n_time_samples: Time samples per datapoint.
        use_importance: Draw times from the importance proposal.

    Returns: Bound on the discrete negative log-likelihood in nats.
    """

    return float(np.mean(dequant_bound_samples(flow, score_model, sde, x_discrete, flow.levels, rng,
                                               n_time_samples, use_importance)))


def uniform_dequant_objective(score_model: ScoreModel,
                              sde: Sde,
                              x_discrete: np.ndarray,
                              levels: int,
                              rng: np.random.Generator,
                              n_time_samples=1,
                              use_importance=True) -> float:
    """
    The bound of var_deq_objective with uniform dequantization noise, drawing the same random numbers.
    """

    return float(np.mean(dequant_bound_samples(None, score_model, sde, x_discrete, levels, rng,
                                               n_time_samples, use_importance)))


def var_deq_loss_and_gradient(flow: DequantFlow,
                              score_model: ScoreModel,
                              sde: Sde,
                              x: np.ndarray,
                              draws: BoundDraws) -> Tuple[float, np.ndarray]:
    """
    Mean dequantized bound for fixed draws and its gradient with respect to the flat flow parameters.
    Only the flow parameters receive gradients.
    """

    variables = flow.trainable_variables
    with tf.GradientTape() as tape:
        loss = tf.reduce_mean(dequant_bound_tensor(flow, score_model, sde, x, flow.levels, draws))
    gradients = tape.gradient(loss, variables, unconnected_gradients=tf.UnconnectedGradients.ZERO)
    return float(loss), np.concatenate([g.numpy().ravel() for g in gradients])
