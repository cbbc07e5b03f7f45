import numpy as np
from scipy.integrate import simpson

from scoreflow.evaluation.likelihood_result import EntropyEstimate, EntropyForm
from scoreflow.model.score_model import ScoreModel
from scoreflow.sde.sde import Sde


def gaussian_entropy(covariance: np.ndarray) -> float:
    covariance = np.atleast_2d(covariance)
    dim = covariance.shape[0]
    _, logdet = np.linalg.slogdet(covariance)
    return float(0.5 * dim * np.log(2. * np.pi * np.e) + 0.5 * logdet)


def terminal_entropy(model: ScoreModel, sde: Sde, samples: np.ndarray, rng: np.random.Generator) -> float:
    """
    Entropy of p_T, exact for models carrying the analytic marginals and moment-matched otherwise.
    """

    if hasattr(model, 'analytic_pt'):
        _, variance = model.analytic_pt(sde.T)
        return gaussian_entropy(np.diag(variance))
    x_T = sde.sample_transition(samples, sde.T, rng)
    return gaussian_entropy(np.cov(x_T, rowvar=False))


def entropy_estimate(model: ScoreModel,
                     sde: Sde,
                     samples: np.ndarray,
                     form: EntropyForm,
                     rng: np.random.Generator,
                     n_time_nodes=101) -> EntropyEstimate:
    """
    Estimates the differential entropy of the data from i.i.d. samples and a time-dependent score model,
    H(p) = H(p_T) + time integral over [epsilon, T] of the chosen integrand.

    The drift form integrates E[2 f.s - g^2 ||s||^2] / 2, the divergence form -E[2 div f + g^2 ||s||^2] / 2;
    the samples are perturbed to each Simpson node with the transition kernel.

    Args:
        model: Score model of the perturbed data marginals.
        sde: Forward SDE.
        samples: Data samples of shape (N, D).
        form: Integrand form.
        rng: Generator for the perturbations.
        n_time_nodes: Odd number of Simpson nodes on [epsilon, T].

    Returns: EntropyEstimate in nats with the standard error over samples.
    """

    if n_time_nodes < 3 or n_time_nodes % 2 == 0:
        raise ValueError('Expected an odd number of at least 3 time nodes, got {}.'.format(n_time_nodes))
    form = EntropyForm(form)
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    dim = samples.shape[-1]
    nodes = np.linspace(sde.epsilon, sde.T, n_time_nodes)
    integrand = np.empty((n_time_nodes, samples.shape[0]))
    for i, t in enumerate(nodes):
        x_t = sde.sample_transition(samples, t, rng)
        s = model.score(x_t, t)
        g2 = sde.diffusion(t) ** 2
        if form == EntropyForm.DRIFT_DOT_SCORE:
            integrand[i] = 0.5 * (2. * np.sum(sde.drift(x_t, t) * s, axis=-1) - g2 * np.sum(s ** 2, axis=-1))
        else:
            integrand[i] = -0.5 * (2. * sde.drift_divergence(t, dim) + g2 * np.sum(s ** 2, axis=-1))
    per_sample = simpson(integrand, x=nodes, axis=0)
    value = terminal_entropy(model, sde, samples, rng) + np.mean(per_sample)
    std_error = np.std(per_sample, ddof=1) / np.sqrt(per_sample.shape[0])
    return EntropyEstimate(float(value), form, float(std_error))
