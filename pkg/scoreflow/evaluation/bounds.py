from typing import Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from scoreflow.evaluation.likelihood_result import LikelihoodKind, LikelihoodResult, summarize
from scoreflow.errors import UnsupportedOperationError
from scoreflow.model.score_model import ScoreModel
from scoreflow.objectives import TimeProposal, gaussian_moments, quadrature_sm
from scoreflow.sde.sde import Sde, check_transition_std, expand_like
from scoreflow.sde.weighting import WeightingScheme
from scoreflow.solvers.divergence import draw_probes
from scoreflow.solvers.solver_config import DivergenceMode, SolverConfig

SAMPLED_INNER = 'sample'
EXACT_INNER = 'exact'


def draw_bound_times(sde: Sde,
                     n_time_samples: int,
                     rng: np.random.Generator,
                     use_importance=True,
                     stratified=False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draws times on [epsilon, T] together with the factors 1 / density that turn integrand samples into
    unbiased estimates of the time integral.

    Args:
        sde: Forward SDE.
        n_time_samples: Number of time samples.
        rng: Generator.
        use_importance: Draw from the importance proposal instead of uniformly.
        stratified: Place one uniform draw in each of n equal strata of the unit interval.

    Returns: Times and factors, both of shape (n_time_samples,).
    """

    if n_time_samples < 1:
        raise ValueError('Bounds need n_time_samples >= 1, got {}.'.format(n_time_samples))
    u = rng.uniform(size=n_time_samples)
    if stratified:
        u = (np.arange(n_time_samples) + u) / n_time_samples
    if use_importance:
        proposal = TimeProposal(sde)
        t = proposal.inverse_cdf(u)
        return t, 1. / proposal.density(t)
    t = sde.epsilon + u * (sde.T - sde.epsilon)
    return t, np.full(n_time_samples, sde.T - sde.epsilon)


def _exact_inner_integrand(model: ScoreModel, sde: Sde, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    # E_{p_0t(x'|x)} of either integrand for an affine score s = k x' + b, per dim
    # g^2 ((k alpha x + b)^2 + k^2 sigma^2 + 2k), the sampled forms agree in expectation
    if not hasattr(model, 'affine_coefficients'):
        raise UnsupportedOperationError('Exact inner expectations need an affine score model, got {}.'.format(
            model.__class__.__name__))
    slope, intercept = model.affine_coefficients(t)
    alpha, sigma = sde.transition_params(t)
    alpha, sigma = expand_like(alpha, slope), expand_like(sigma, slope)
    per_dim = (slope * alpha * x + intercept) ** 2 + (slope * sigma) ** 2 + 2. * slope
    g2 = sde.diffusion(t) ** 2
    return 0.5 * (g2 * np.sum(per_dim, axis=-1) - 2. * sde.drift_divergence(t, x.shape[-1]))


def _perturb(sde: Sde, x: np.ndarray, t: np.ndarray, rng: np.random.Generator):
    alpha, sigma = sde.transition_params(t)
    check_transition_std(sigma)
    noise = rng.standard_normal((t.shape[0], x.shape[-1]))
    x_t = alpha[:, None] * x[None, :] + sigma[:, None] * noise
    return x_t, noise, sigma


def dsm_integrand(model: ScoreModel,
                  sde: Sde,
                  x: np.ndarray,
                  t: np.ndarray,
                  rng: np.random.Generator,
                  inner=SAMPLED_INNER) -> np.ndarray:
    """
    Samples of 1/2 [g^2 ||s - grad log p_0t||^2 - g^2 ||grad log p_0t||^2 - 2 div f] with one x' per time.

    With grad log p_0t(x'|x) = -z / sigma the two squared norms are combined to ||s||^2 + 2 s.z / sigma,
    which avoids cancelling two terms of order 1 / sigma^2.
    """

    if inner == EXACT_INNER:
        return _exact_inner_integrand(model, sde, x, t)
    x_t, noise, sigma = _perturb(sde, x, t, rng)
    s = model.score(x_t, t)
    combined = np.sum(s ** 2, axis=-1) + 2. * np.sum(s * noise, axis=-1) / sigma
    return 0.5 * (sde.diffusion(t) ** 2 * combined - 2. * sde.drift_divergence(t, x.shape[-1]))


def sm_integrand(model: ScoreModel,
                 sde: Sde,
                 x: np.ndarray,
                 t: np.ndarray,
                 rng: np.random.Generator,
                 cfg: SolverConfig = None,
                 inner=SAMPLED_INNER) -> np.ndarray:
    """
    Samples of 1/2 [2 g^2 div s + g^2 ||s||^2 - 2 div f] with one x' per time.
    """

    if inner == EXACT_INNER:
        return _exact_inner_integrand(model, sde, x, t)
    cfg = cfg or SolverConfig()
    x_t, _, _ = _perturb(sde, x, t, rng)
    s = model.score(x_t, t)
    if cfg.divergence_mode(x.shape[-1]) == DivergenceMode.EXACT:
        score_divergence = model.score_divergence(x_t, t)
    else:
        probes = draw_probes(rng, cfg.n_probes, x_t.shape, cfg.probe)
        score_divergence = np.mean([np.sum(v * model.score_vjp(x_t, t, v), axis=-1) for v in probes], axis=0)
    g2 = sde.diffusion(t) ** 2
    return 0.5 * (2. * g2 * score_divergence + g2 * np.sum(s ** 2, axis=-1) - 2. * sde.drift_divergence(t, x.shape[-1]))


def _negated_bound(sde: Sde,
                   x: np.ndarray,
                   weighted: np.ndarray) -> Tuple[float, float]:
    value = sde.prior_cross_entropy(x[None, :])[0] + np.mean(weighted)
    std_error = np.std(weighted, ddof=1) / np.sqrt(weighted.shape[0]) if weighted.shape[0] > 1 else 0.
    return -float(value), float(std_error)


def bound_dsm(model: ScoreModel,
              sde: Sde,
              x: np.ndarray,
              n_time_samples=1000,
              rng: np.random.Generator = None,
              use_importance=True,
              stratified=False,
              inner=SAMPLED_INNER,
              levels: int = None) -> LikelihoodResult:
    """
    Monte Carlo estimate of the denoising bound on -log p(x) over [epsilon, T].

    The prior cross-entropy term is evaluated in closed form, the time integral with n_time_samples
    uniform or importance sampled times and one perturbed point per time.

    Args:
        model: Score model.
        sde: Forward SDE.
        x: Datapoint of shape (D,).
        n_time_samples: Number of time samples.
        rng: Generator for times and perturbations.
        use_importance: Draw times from the importance proposal.
        stratified: Stratify the time draws.
        inner: 'sample' draws x' per time, 'exact' uses the closed-form inner expectation of affine models.
        levels (optional): Number of discrete levels for the bits/dim conversion.

    Returns: LikelihoodResult holding the negated bound as logp_nats and the standard error over time samples.
    """

    x = np.asarray(x, dtype=np.float64).ravel()
    t, factors = draw_bound_times(sde, n_time_samples, rng, use_importance, stratified)
    weighted = factors * dsm_integrand(model, sde, x, t, rng, inner)
    logp, std_error = _negated_bound(sde, x, weighted)
    return LikelihoodResult.create(logp, LikelihoodKind.BOUND_DSM, x.shape[0], n_time_samples, std_error, levels)


def bound_sm(model: ScoreModel,
             sde: Sde,
             x: np.ndarray,
             n_time_samples=1000,
             rng: np.random.Generator = None,
             use_importance=True,
             stratified=False,
             cfg: SolverConfig = None,
             inner=SAMPLED_INNER,
             levels: int = None) -> LikelihoodResult:
    """
    Monte Carlo estimate of the score matching form of the bound, equal in expectation to bound_dsm.
    The divergence of the score is exact or a Hutchinson estimate according to cfg.
    """

    x = np.asarray(x, dtype=np.float64).ravel()
    t, factors = draw_bound_times(sde, n_time_samples, rng, use_importance, stratified)
    weighted = factors * sm_integrand(model, sde, x, t, rng, cfg, inner)
    logp, std_error = _negated_bound(sde, x, weighted)
    return LikelihoodResult.create(logp, LikelihoodKind.BOUND_SM, x.shape[0], n_time_samples, std_error, levels)


def tweedie_correction_samples(model: ScoreModel,
                               sde: Sde,
                               x: np.ndarray,
                               rng: np.random.Generator,
                               n_draws=1) -> np.ndarray:
    """
    Samples of -[log q(x | x') - log p_0eps(x' | x)] for x' ~ p_0eps(. | x), where q is the Gaussian
    denoising distribution N(x'/alpha + sigma^2/alpha s(x', eps), sigma^2/alpha^2 I).
    With x' = alpha x + sigma z each sample equals -D log alpha + (||z + sigma s||^2 - ||z||^2) / 2.
    """

    alpha, sigma = sde.transition_params(sde.epsilon)
    check_transition_std(sigma)
    noise = rng.standard_normal((n_draws, x.shape[-1]))
    x_eps = alpha * x[None, :] + sigma * noise
    s = model.score(x_eps, sde.epsilon)
    return -x.shape[-1] * np.log(alpha) + 0.5 * (np.sum((noise + sigma * s) ** 2, axis=-1) -
                                                  np.sum(noise ** 2, axis=-1))


def tweedie_corrected_bound(model: ScoreModel,
                            sde: Sde,
                            x: np.ndarray,
                            n_time_samples=1000,
                            rng: np.random.Generator = None,
                            use_importance=True,
                            n_correction_draws=1,
                            stratified=False,
                            inner=SAMPLED_INNER,
                            levels: int = None) -> LikelihoodResult:
    """
    Bound on -log p(x) of the untruncated data, the denoising bound at epsilon plus the Tweedie correction
    averaged over n_correction_draws perturbations.
    """

    x = np.asarray(x, dtype=np.float64).ravel()
    bound = bound_dsm(model, sde, x, n_time_samples, rng, use_importance, stratified, inner)
    correction = tweedie_correction_samples(model, sde, x, rng, n_correction_draws)
    correction_var = np.var(correction, ddof=1) / n_correction_draws if n_correction_draws > 1 else 0.
    logp = bound.logp_nats - float(np.mean(correction))
    std_error = np.sqrt(bound.std_error ** 2 + correction_var)
    return LikelihoodResult.create(logp, LikelihoodKind.BOUND_DSM_CORRECTED, x.shape[0], n_time_samples,
                                   std_error, levels)


def evaluate_bounds(model: ScoreModel,
                    sde: Sde,
                    x: np.ndarray,
                    rng: np.random.Generator,
                    form='dsm',
                    corrected=False,
                    **kwargs) -> List[LikelihoodResult]:
    """
    Evaluates the requested bound for every row of x.
    """

    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if form == 'sm':
        if corrected:
            raise ValueError('The Tweedie correction is only available for the dsm form.')
        return [bound_sm(model, sde, point, rng=rng, **kwargs) for point in x]
    if form != 'dsm':
        raise ValueError('Unknown bound form {}, expected sm or dsm.'.format(form))
    bound_fn = tweedie_corrected_bound if corrected else bound_dsm
    return [bound_fn(model, sde, point, rng=rng, **kwargs) for point in x]


def gaussian_kl_divergence(m1: np.ndarray, v1: np.ndarray, m2: np.ndarray, v2: np.ndarray) -> float:
    return float(0.5 * np.sum(np.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / v2 - 1.))


def prior_kl(sde: Sde, data) -> float:
    """
    Closed-form KL(p_T || pi) for Gaussian data.
    """

    mu0, var0 = gaussian_moments(data)
    alpha, sigma = sde.transition_params(sde.T)
    prior_var = np.full_like(mu0, sde.prior_variance)
    return gaussian_kl_divergence(alpha * mu0, alpha ** 2 * var0 + sigma ** 2, np.zeros_like(mu0), prior_var)


def prior_gap(sde: Sde, data, x: np.ndarray) -> np.ndarray:
    """
    Closed-form E_{p_0T(x'|x)}[log p_T(x') - log pi(x')] per datapoint for Gaussian data, the gap of the
    bound of an exact score model; its mean over the data is KL(p_T || pi).
    """

    mu0, var0 = gaussian_moments(data)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    alpha, sigma = sde.transition_params(sde.T)
    mean_T, var_T = alpha * mu0, alpha ** 2 * var0 + sigma ** 2
    prior_var = sde.prior_variance
    log_pt = -0.5 * np.log(2. * np.pi * var_T) - ((alpha * x - mean_T) ** 2 + sigma ** 2) / (2. * var_T)
    log_prior = -0.5 * np.log(2. * np.pi * prior_var) - ((alpha * x) ** 2 + sigma ** 2) / (2. * prior_var)
    return np.sum(log_pt - log_prior, axis=-1)


def kl_upper_bound(model: ScoreModel,
                   sde: Sde,
                   data_distribution,
                   n_nodes=201,
                   spacing='log') -> float:
    """
    J_SM with likelihood weighting by quadrature plus the closed-form KL(p_T || pi), an upper bound of
    KL(p || p_SDE) for Gaussian data.
    """

    j_sm = quadrature_sm(model, sde, data_distribution, WeightingScheme.likelihood(), n_nodes, spacing)
    return j_sm + prior_kl(sde, data_distribution)


class BoundOrdering(NamedTuple):
    """
    Per-datapoint comparison of bounds on -log p against exact probability flow negative log-likelihoods.
    """

    fraction: float
    n_points: int
    mean_gap_nats: float
    gap_ci_half_width: float

    def to_dict(self) -> Dict[str, Union[int, float]]:
        return dict(self._asdict())


def bound_ordering(bounds: Sequence[LikelihoodResult],
                   exact: Sequence[LikelihoodResult],
                   n_std_errors=3.,
                   tolerance=1e-4) -> BoundOrdering:
    """
    Fraction of datapoints whose bound is at least the ODE negative log-likelihood.

    Bounds are Monte Carlo estimates, a point counts as ordered when the bound plus n_std_errors of its
    reported standard errors reaches the ODE value minus the solver tolerance.

    Args:
        bounds: Bound results, logp_nats holding the negated bound.
        exact: ODE results for the same datapoints.
        n_std_errors: Monte Carlo allowance in standard errors of the bound.
        tolerance: Absolute allowance in nats for the ODE solver error.

    Returns: BoundOrdering with the fraction of ordered points and the mean gap bound - ODE NLL.
    """

    if len(bounds) != len(exact) or len(bounds) == 0:
        raise ValueError('Expected the same nonzero number of bounds and ODE results, got {} and {}.'.format(
            len(bounds), len(exact)))
    bound_nll = -np.array([r.logp_nats for r in bounds])
    std_errors = np.array([r.std_error for r in bounds])
    ode_nll = -np.array([r.logp_nats for r in exact])
    ordered = bound_nll + n_std_errors * std_errors >= ode_nll - tolerance
    gap = summarize(bound_nll - ode_nll)
    return BoundOrdering(float(np.mean(ordered)), len(bounds), gap.mean, gap.ci_half_width)
