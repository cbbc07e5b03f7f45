from enum import Enum
from typing import NamedTuple, Tuple, Union

import numpy as np
from scipy.integrate import simpson

from scoreflow.errors import NumericalError, UnsupportedOperationError
from scoreflow.model.score_model import ScoreModel
from scoreflow.sde.sde import ArrayLike, Sde, check_transition_std, expand_like
from scoreflow.sde.weighting import WeightingScheme


class Proposal(str, Enum):
    UNIFORM = 'uniform'
    IMPORTANCE = 'importance'


class ObjectiveEstimate(NamedTuple):
    """
    One Monte Carlo evaluation of the weighted denoising score matching objective.
    """

    value: float
    t_sampled: ArrayLike
    weight_applied: ArrayLike
    proposal: Proposal


class TimeProposal:
    """
    Importance distribution p(t) = g(t)^2 / (lambda_original(t) Z) on [epsilon, T], sampled by inverse CDF.
    """

    def __init__(self, sde: Sde) -> None:
        self.sde = sde
        self._lower = float(sde.proposal_antiderivative(sde.epsilon))
        self.normalizer = float(sde.proposal_antiderivative(sde.T)) - self._lower
        if not np.isfinite(self.normalizer) or self.normalizer <= 0.:
            raise NumericalError('Importance proposal normalizer is {}.'.format(self.normalizer))

    def density(self, t: ArrayLike) -> ArrayLike:
        return self.sde.diffusion(t) ** 2 / (self.sde.original_weighting(t) * self.normalizer)

    def cdf(self, t: ArrayLike) -> ArrayLike:
        return (self.sde.proposal_antiderivative(t) - self._lower) / self.normalizer

    def inverse_cdf(self, u: ArrayLike) -> ArrayLike:
        t = self.sde.proposal_antiderivative_inverse(self._lower + np.asarray(u, dtype=np.float64) * self.normalizer)
        if not np.all(np.isfinite(t)):
            raise NumericalError('Inverse CDF of the importance proposal produced non-finite times.')
        return np.clip(t, self.sde.epsilon, self.sde.T)

    def sample(self, rng: np.random.Generator, size=None) -> ArrayLike:
        return self.inverse_cdf(rng.uniform(size=size))

    def importance_factor(self, t: ArrayLike) -> ArrayLike:
        """
        Likelihood weighting divided by the proposal density, Z * lambda_original(t).
        """

        return self.normalizer * self.sde.original_weighting(t)


def _sample_times(sde: Sde,
                  proposal: Proposal,
                  rng: np.random.Generator,
                  size=None,
                  time_proposal: TimeProposal = None) -> ArrayLike:
    if proposal == Proposal.IMPORTANCE:
        return (time_proposal or TimeProposal(sde)).sample(rng, size)
    return rng.uniform(sde.epsilon, sde.T, size=size)


def _time_factors(sde: Sde,
                  scheme: WeightingScheme,
                  proposal: Proposal,
                  t: ArrayLike,
                  time_proposal: TimeProposal = None) -> ArrayLike:
    if proposal == Proposal.IMPORTANCE:
        if scheme.interpolation != 1.:
            raise ValueError('Importance sampled times require the likelihood weighting, got {}.'.format(scheme))
        return (time_proposal or TimeProposal(sde)).importance_factor(t)
    return (sde.T - sde.epsilon) * scheme(sde, t)


def _half_residual_norms(model: ScoreModel,
                         sde: Sde,
                         x0: np.ndarray,
                         t: ArrayLike,
                         rng: np.random.Generator) -> np.ndarray:
    x_t = sde.sample_transition(x0, t, rng)
    residual = sde.transition_score(x0, x_t, t) - model.score(x_t, t)
    return 0.5 * np.sum(residual ** 2, axis=-1)


def dsm_loss_at(model: ScoreModel,
                sde: Sde,
                x0: np.ndarray,
                t: ArrayLike,
                rng: np.random.Generator,
                scheme: WeightingScheme) -> Union[float, np.ndarray]:
    """
    Per-sample denoising score matching loss 0.5 * lambda(t) * ||grad log p_0t(x' | x0) - s(x', t)||^2
    with x' drawn from the transition kernel.

    Args:
        model: Score model.
        sde: Forward SDE.
        x0: Data vector (D,) or batch (N, D).
        t: Shared time or times of shape (N,).
        rng: Generator for the perturbation noise.
        scheme: Weighting scheme lambda.

    Returns: Loss as float for a single vector, array of shape (N,) for a batch.
    """

    x0 = np.asarray(x0, dtype=np.float64)
    return scheme(sde, t) * _half_residual_norms(model, sde, x0, t, rng)


def sm_loss_at(model: ScoreModel,
               sde: Sde,
               pt_mean: np.ndarray,
               pt_var: np.ndarray,
               t: float,
               rng: np.random.Generator,
               scheme: WeightingScheme,
               n_samples=1) -> float:
    """
    Monte Carlo estimate of 0.5 * lambda(t) * E_{p_t} ||grad log p_t(x) - s(x, t)||^2 for a Gaussian p_t.
    """

    pt_mean, pt_var = np.asarray(pt_mean, dtype=np.float64), np.asarray(pt_var, dtype=np.float64)
    x = pt_mean + np.sqrt(pt_var) * rng.standard_normal((n_samples, pt_mean.shape[-1]))
    residual = (pt_mean - x) / pt_var - model.score(x, t)
    return float(0.5 * scheme(sde, t) * np.mean(np.sum(residual ** 2, axis=-1)))


def mc_objective_uniform(model: ScoreModel,
                         sde: Sde,
                         batch: np.ndarray,
                         rng: np.random.Generator,
                         scheme: WeightingScheme,
                         per_example_times=False) -> ObjectiveEstimate:
    """
    Unbiased estimate of the weighted objective over [epsilon, T] with uniformly drawn time.
    """

    batch = _check_batch(batch)
    size = batch.shape[0] if per_example_times else None
    t = _sample_times(sde, Proposal.UNIFORM, rng, size)
    factor = _time_factors(sde, scheme, Proposal.UNIFORM, t)
    value = np.mean(factor * _half_residual_norms(model, sde, batch, t, rng))
    return ObjectiveEstimate(float(value), t, factor, Proposal.UNIFORM)


def mc_objective_importance(model: ScoreModel,
                            sde: Sde,
                            batch: np.ndarray,
                            rng: np.random.Generator,
                            per_example_times=False,
                            time_proposal: TimeProposal = None) -> ObjectiveEstimate:
    """
    Unbiased estimate of the likelihood weighted objective with time drawn from the importance proposal,
    Z * lambda_original(t) * (unweighted denoising loss at t).
    """

    batch = _check_batch(batch)
    time_proposal = time_proposal or TimeProposal(sde)
    size = batch.shape[0] if per_example_times else None
    t = time_proposal.sample(rng, size)
    factor = time_proposal.importance_factor(t)
    value = np.mean(factor * _half_residual_norms(model, sde, batch, t, rng))
    return ObjectiveEstimate(float(value), t, factor, Proposal.IMPORTANCE)


def sample_objective_estimates(model: ScoreModel,
                               sde: Sde,
                               x0: np.ndarray,
                               rng: np.random.Generator,
                               scheme: WeightingScheme,
                               proposal: Proposal) -> np.ndarray:
    """
    Draws one single-point objective estimate per row of x0, each with its own time, in one vectorized pass.
    """

    x0 = _check_batch(x0)
    time_proposal = TimeProposal(sde) if proposal == Proposal.IMPORTANCE else None
    t = _sample_times(sde, proposal, rng, x0.shape[0], time_proposal)
    factor = _time_factors(sde, scheme, proposal, t, time_proposal)
    return factor * _half_residual_norms(model, sde, x0, t, rng)


def denoising_batch(sde: Sde,
                    x0: np.ndarray,
                    rng: np.random.Generator,
                    scheme: WeightingScheme,
                    proposal: Proposal,
                    per_example_times=False,
                    time_proposal: TimeProposal = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Draws the regression problem of one training step.

    Returns: Perturbed inputs x_t (N, D), times (N,), targets grad log p_0t(x_t | x0) (N, D) and factors (N,)
        such that the mean of 0.5 * factor * ||target - s(x_t, t)||^2 is the objective estimate.
    """

    x0 = _check_batch(x0)
    n = x0.shape[0]
    t = _sample_times(sde, proposal, rng, n if per_example_times else None, time_proposal)
    t = np.broadcast_to(t, (n,)).copy()
    factors = np.broadcast_to(_time_factors(sde, scheme, proposal, t, time_proposal), (n,)).copy()
    x_t = sde.sample_transition(x0, t, rng)
    targets = sde.transition_score(x0, x_t, t)
    return x_t, t, targets, factors


def gaussian_moments(data) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and diagonal variance of a Gaussian data distribution, e.g. a GaussianDataset or AnalyticGaussian.
    """

    mu0, var0 = getattr(data, 'mu0', None), getattr(data, 'var0', None)
    if mu0 is None or var0 is None:
        raise UnsupportedOperationError('Closed-form expectations need Gaussian data, got {}.'.format(
            data.__class__.__name__))
    return np.asarray(mu0, dtype=np.float64), np.asarray(var0, dtype=np.float64)


def quadrature_nodes(sde: Sde, n_nodes: int, spacing='linear') -> np.ndarray:
    if n_nodes < 9 or n_nodes % 2 == 0:
        raise ValueError('Simpson quadrature needs an odd number of at least 9 nodes, got {}.'.format(n_nodes))
    if spacing == 'linear':
        return np.linspace(sde.epsilon, sde.T, n_nodes)
    if spacing == 'log':
        return np.geomspace(sde.epsilon, sde.T, n_nodes)
    raise ValueError('Unknown node spacing {}, expected linear or log.'.format(spacing))


def integrate_nodes(values: np.ndarray, nodes: np.ndarray, spacing='linear') -> float:
    """
    Composite Simpson rule over the nodes, applied in log t for log spacing.
    """

    if spacing == 'log':
        return float(simpson(values * nodes, x=np.log(nodes)))
    return float(simpson(values, x=nodes))


def _affine_coefficients(model: ScoreModel, nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if not hasattr(model, 'affine_coefficients'):
        raise UnsupportedOperationError('{} has no closed-form affine coefficients.'.format(model.__class__.__name__))
    return model.affine_coefficients(nodes)


def dsm_inner_expectation(model: ScoreModel, sde: Sde, data, t: np.ndarray) -> np.ndarray:
    """
    Exact E ||grad log p_0t(x' | x0) - s(x', t)||^2 / 2 for affine models and Gaussian data, per time.
    """

    mu0, var0 = gaussian_moments(data)
    slope, intercept = _affine_coefficients(model, t)
    alpha, sigma = sde.transition_params(t)
    check_transition_std(sigma)
    alpha, sigma = expand_like(alpha, slope), expand_like(sigma, slope)
    per_dim = (1. / sigma + slope * sigma) ** 2 + (slope * alpha) ** 2 * var0 + (slope * alpha * mu0 + intercept) ** 2
    return 0.5 * np.sum(per_dim, axis=-1)


def sm_inner_expectation(model: ScoreModel, sde: Sde, data, t: np.ndarray) -> np.ndarray:
    """
    Exact E_{p_t} ||grad log p_t(x) - s(x, t)||^2 / 2 for affine models and Gaussian data, per time.
    """

    mu0, var0 = gaussian_moments(data)
    slope, intercept = _affine_coefficients(model, t)
    alpha, sigma = sde.transition_params(t)
    alpha, sigma = expand_like(alpha, slope), expand_like(sigma, slope)
    mean_t, var_t = alpha * mu0, alpha ** 2 * var0 + sigma ** 2
    per_dim = (slope + 1. / var_t) ** 2 * var_t + (slope * mean_t + intercept) ** 2
    return 0.5 * np.sum(per_dim, axis=-1)


def quadrature_dsm(model: ScoreModel,
                   sde: Sde,
                   data,
                   scheme: WeightingScheme,
                   n_nodes=201,
                   spacing='linear',
                   rng: np.random.Generator = None,
                   n_inner=10000) -> float:
    """
    Quadrature reference of the weighted denoising objective integral over [epsilon, T].

    Affine models on Gaussian data use the exact inner expectation; any other combination falls back
    to a Monte Carlo inner expectation with n_inner data points per node.

    Args:
        model: Score model.
        sde: Forward SDE.
        data: Data distribution, a dataset or an AnalyticGaussian describing the data.
        scheme: Weighting scheme lambda.
        n_nodes: Odd number of Simpson nodes, at least 9.
        spacing: 'linear' nodes in t or 'log' nodes for integrands peaked near epsilon.
        rng: Generator for the Monte Carlo fallback.
        n_inner: Number of inner samples of the fallback.

    Returns: Objective value in nats.
    """

    nodes = quadrature_nodes(sde, n_nodes, spacing)
    try:
        inner = dsm_inner_expectation(model, sde, data, nodes)
    except UnsupportedOperationError:
        if rng is None:
            raise
        inner = np.array([np.mean(_half_residual_norms(model, sde, data.sample_batch(n_inner, rng), t, rng))
                          for t in nodes])
    return integrate_nodes(scheme(sde, nodes) * inner, nodes, spacing)


def _sampled_sm_inner(model: ScoreModel, sde: Sde, data, t: float, rng: np.random.Generator, n_inner: int) -> float:
    mu0, var0 = gaussian_moments(data)
    alpha, sigma = sde.transition_params(t)
    mean_t, var_t = alpha * mu0, alpha ** 2 * var0 + sigma ** 2
    x_t = mean_t + np.sqrt(var_t) * rng.standard_normal((n_inner, mu0.shape[0]))
    residual = -(x_t - mean_t) / var_t - model.score(x_t, t)
    return float(np.mean(0.5 * np.sum(residual ** 2, axis=-1)))


def quadrature_sm(model: ScoreModel,
                  sde: Sde,
                  data,
                  scheme: WeightingScheme,
                  n_nodes=201,
                  spacing='linear',
                  rng: np.random.Generator = None,
                  n_inner=10000) -> float:
    """
    Quadrature of the weighted score matching objective J_SM for Gaussian data. Models without affine
    coefficients use a Monte Carlo inner expectation over n_inner draws from p_t when rng is given.
    """

    nodes = quadrature_nodes(sde, n_nodes, spacing)
    try:
        inner = sm_inner_expectation(model, sde, data, nodes)
    except UnsupportedOperationError:
        if rng is None:
            raise
        inner = np.array([_sampled_sm_inner(model, sde, data, t, rng, n_inner) for t in nodes])
    return integrate_nodes(scheme(sde, nodes) * inner, nodes, spacing)


def zero_model_sm(sde: Sde, data, scheme: WeightingScheme, n_nodes=201, spacing='linear') -> float:
    """
    J_SM of the score model s = 0, the weighted Fisher information of the perturbed Gaussian data.
    """

    mu0, var0 = gaussian_moments(data)
    nodes = quadrature_nodes(sde, n_nodes, spacing)
    alpha, sigma = sde.transition_params(nodes)
    var_t = alpha[:, None] ** 2 * var0 + sigma[:, None] ** 2
    return integrate_nodes(scheme(sde, nodes) * 0.5 * np.sum(1. / var_t, axis=-1), nodes, spacing)


def _check_batch(batch: np.ndarray) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError('Objective estimates need a nonempty batch.')
    return batch
