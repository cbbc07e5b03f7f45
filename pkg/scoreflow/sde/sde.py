import abc
from abc import abstractmethod
from enum import Enum
from typing import Dict, NamedTuple, Union

import numpy as np

from scoreflow.errors import DegenerateTransitionError

ArrayLike = Union[float, np.ndarray]

MIN_TRANSITION_STD = 1e-12


class SdeKind(str, Enum):
    VE = 've'
    VP = 'vp'
    SUB_VP = 'subvp'


class TransitionParams(NamedTuple):
    """
    Parameters of the Gaussian transition kernel p_0t(x' | x) = N(x' | alpha * x, sigma^2 I).
    """

    alpha: ArrayLike
    sigma: ArrayLike


def expand_like(values: ArrayLike, x: np.ndarray) -> np.ndarray:
    """
    Reshapes per-example time quantities of shape (N,) so that they broadcast against x of shape (N, D).
    """

    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (np.ndim(x) - values.ndim))


class Sde(abc.ABC):
    """
    Linear forward SDE dx = f(t) x dt + g(t) dw on the horizon [0, T], truncated at epsilon.

    All methods accept scalar times or arrays of times and operate in float64.
    """

    kind: SdeKind = None

    def __init__(self, T: float, epsilon: float) -> None:
        if not 0. < epsilon < T:
            raise ValueError('Expected 0 < epsilon < T, got epsilon={}, T={}.'.format(epsilon, T))
        self.T = float(T)
        self.epsilon = float(epsilon)

    @abstractmethod
    def drift_coefficient(self, t: ArrayLike) -> ArrayLike:
        """
        Scalar coefficient f(t) of the linear drift f(x, t) = f(t) * x.
        """

        pass

    @abstractmethod
    def diffusion(self, t: ArrayLike) -> ArrayLike:
        """
        Diffusion coefficient g(t) > 0.
        """

        pass

    @abstractmethod
    def transition_params(self, t: ArrayLike) -> TransitionParams:
        """
        Mean coefficient and std of the transition kernel p_0t.
        """

        pass

    @abstractmethod
    def transition_params_between(self, s: ArrayLike, t: ArrayLike) -> TransitionParams:
        """
        Mean coefficient and std of the kernel p_st(x(t) | x(s)) for s <= t.
        """

        pass

    @abstractmethod
    def original_weighting(self, t: ArrayLike) -> ArrayLike:
        """
        The weighting lambda(t) of the original score SDE objectives.
        """

        pass

    @abstractmethod
    def proposal_antiderivative(self, t: ArrayLike) -> ArrayLike:
        """
        An antiderivative of g(t)^2 / original_weighting(t), the unnormalized importance proposal.
        """

        pass

    @abstractmethod
    def proposal_antiderivative_inverse(self, v: ArrayLike) -> ArrayLike:
        """
        Inverse of proposal_antiderivative.
        """

        pass

    @property
    @abstractmethod
    def prior_variance(self) -> float:
        pass

    @abstractmethod
    def to_config(self) -> Dict[str, Union[str, float]]:
        pass

    def drift(self, x: np.ndarray, t: ArrayLike) -> np.ndarray:
        return expand_like(self.drift_coefficient(t), x) * x

    def drift_divergence(self, t: ArrayLike, dim: int) -> ArrayLike:
        """
        Divergence of the linear drift, dim * f(t), in closed form.
        """

        return dim * self.drift_coefficient(t)

    def transition_score(self, x0: np.ndarray, xt: np.ndarray, t: ArrayLike) -> np.ndarray:
        """
        Score of the transition kernel with respect to xt, (alpha * x0 - xt) / sigma^2.
        """

        alpha, sigma = self.transition_params(t)
        check_transition_std(sigma)
        alpha, sigma = expand_like(alpha, xt), expand_like(sigma, xt)
        return (alpha * x0 - xt) / sigma ** 2

    def sample_transition(self, x0: np.ndarray, t: ArrayLike, rng: np.random.Generator) -> np.ndarray:
        alpha, sigma = self.transition_params(t)
        noise = rng.standard_normal(np.shape(x0))
        return expand_like(alpha, x0) * x0 + expand_like(sigma, x0) * noise

    def prior_logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        dim = x.shape[-1]
        variance = self.prior_variance
        return -0.5 * dim * np.log(2. * np.pi * variance) - 0.5 * np.sum(x ** 2, axis=-1) / variance

    def prior_sample(self, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
        return np.sqrt(self.prior_variance) * rng.standard_normal((n, dim))

    def prior_cross_entropy(self, x: np.ndarray) -> np.ndarray:
        """
        Closed form of -E_{p_0T(x' | x)}[log pi(x')] for each row of x.
        """

        x = np.asarray(x, dtype=np.float64)
        dim = x.shape[-1]
        alpha, sigma = self.transition_params(self.T)
        variance = self.prior_variance
        second_moment = alpha ** 2 * np.sum(x ** 2, axis=-1) + dim * sigma ** 2
        return 0.5 * dim * np.log(2. * np.pi * variance) + 0.5 * second_moment / variance

    def __repr__(self) -> str:
        return '{}({})'.format(self.__class__.__name__, self.to_config())


class VeSde(Sde):
    """
    Variance exploding SDE with geometric diffusion g(t) = sigma_min * (sigma_max / sigma_min)^t.
    """

    kind = SdeKind.VE

    def __init__(self, sigma_min=0.01, sigma_max=50., T=1., epsilon=1e-5) -> None:
        super().__init__(T, epsilon)
        if not 0. < sigma_min < sigma_max:
            raise ValueError('Expected 0 < sigma_min < sigma_max, got {} and {}.'.format(sigma_min, sigma_max))
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self._log_ratio = np.log(self.sigma_max / self.sigma_min)

    def drift_coefficient(self, t):
        return np.zeros_like(np.asarray(t, dtype=np.float64))

    def diffusion(self, t):
        return self.sigma_min * np.exp(np.asarray(t, dtype=np.float64) * self._log_ratio)

    def marginal_variance(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.sigma_min ** 2 * np.expm1(2. * t * self._log_ratio) / (2. * self._log_ratio)

    def transition_params(self, t):
        variance = self.marginal_variance(t)
        return TransitionParams(np.ones_like(variance), np.sqrt(variance))

    def transition_params_between(self, s, t):
        variance = self.marginal_variance(t) - self.marginal_variance(s)
        return TransitionParams(np.ones_like(variance), np.sqrt(variance))

    def original_weighting(self, t):
        return self.diffusion(t) ** 2

    def proposal_antiderivative(self, t):
        return np.asarray(t, dtype=np.float64)

    def proposal_antiderivative_inverse(self, v):
        return np.asarray(v, dtype=np.float64)

    @property
    def prior_variance(self):
        return float(self.marginal_variance(self.T))

    def to_config(self):
        return {'kind': self.kind.value, 'sigma_min': self.sigma_min, 'sigma_max': self.sigma_max,
                'T': self.T, 'epsilon': self.epsilon}


class _LinearBetaSde(Sde):
    """
    Shared linear schedule beta(t) = beta_min + t * (beta_max - beta_min) of the VP and sub-VP SDEs.
    """

    def __init__(self, beta_min, beta_max, T, epsilon) -> None:
        super().__init__(T, epsilon)
        if not 0. <= beta_min < beta_max:
            raise ValueError('Expected 0 <= beta_min < beta_max, got {} and {}.'.format(beta_min, beta_max))
        self.beta_min = float(beta_min)
        self.beta_max = float(beta_max)

    def beta(self, t):
        return self.beta_min + np.asarray(t, dtype=np.float64) * (self.beta_max - self.beta_min)

    def integrated_beta(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t ** 2

    def integrated_beta_inverse(self, b):
        # positive root of beta_min * t + 0.5 * delta * t^2 = b, written to avoid cancellation
        b = np.asarray(b, dtype=np.float64)
        delta = self.beta_max - self.beta_min
        return 2. * b / (self.beta_min + np.sqrt(self.beta_min ** 2 + 2. * delta * b))

    def drift_coefficient(self, t):
        return -0.5 * self.beta(t)

    @property
    def prior_variance(self):
        return 1.

    def to_config(self):
        return {'kind': self.kind.value, 'beta_min': self.beta_min, 'beta_max': self.beta_max,
                'T': self.T, 'epsilon': self.epsilon}


class VpSde(_LinearBetaSde):
    """
    Variance preserving SDE dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw.
    """

    kind = SdeKind.VP

    def __init__(self, beta_min=0.1, beta_max=20., T=1., epsilon=1e-5) -> None:
        super().__init__(beta_min, beta_max, T, epsilon)

    def diffusion(self, t):
        return np.sqrt(self.beta(t))

    def transition_params(self, t):
        b = self.integrated_beta(t)
        return TransitionParams(np.exp(-0.5 * b), np.sqrt(-np.expm1(-b)))

    def transition_params_between(self, s, t):
        b = self.integrated_beta(t) - self.integrated_beta(s)
        return TransitionParams(np.exp(-0.5 * b), np.sqrt(-np.expm1(-b)))

    def original_weighting(self, t):
        return -np.expm1(-self.integrated_beta(t))

    def proposal_antiderivative(self, t):
        # log(e^B - 1) = B + log(1 - e^-B)
        b = self.integrated_beta(t)
        return b + np.log(-np.expm1(-b))

    def proposal_antiderivative_inverse(self, v):
        # e^B = 1 + e^v
        return self.integrated_beta_inverse(np.logaddexp(0., v))


class SubVpSde(_LinearBetaSde):
    """
    Sub-variance preserving SDE dx = -1/2 beta(t) x dt + sqrt(beta(t) (1 - e^{-2 B(t)})) dw.
    """

    kind = SdeKind.SUB_VP

    def __init__(self, beta_min=0.1, beta_max=20., T=1., epsilon=1e-2) -> None:
        super().__init__(beta_min, beta_max, T, epsilon)

    def diffusion(self, t):
        return np.sqrt(self.beta(t) * -np.expm1(-2. * self.integrated_beta(t)))

    def transition_params(self, t):
        b = self.integrated_beta(t)
        return TransitionParams(np.exp(-0.5 * b), -np.expm1(-b))

    def transition_params_between(self, s, t):
        b_s, b_t = self.integrated_beta(s), self.integrated_beta(t)
        variance = -np.expm1(-(b_t - b_s)) - np.exp(-b_t - b_s) + np.exp(-2. * b_t)
        return TransitionParams(np.exp(-0.5 * (b_t - b_s)), np.sqrt(np.maximum(variance, 0.)))

    def original_weighting(self, t):
        return np.expm1(-self.integrated_beta(t)) ** 2

    def proposal_antiderivative(self, t):
        # 2 log sinh(B / 2) with log sinh(y) = y + log(1 - e^{-2y}) - log 2
        half_b = 0.5 * self.integrated_beta(t)
        return 2. * (half_b + np.log(-np.expm1(-2. * half_b)) - np.log(2.))

    def proposal_antiderivative_inverse(self, v):
        half_v = 0.5 * np.asarray(v, dtype=np.float64)
        # asinh(e^y), switching to y + log(1 + sqrt(1 + e^{-2y})) where e^y would overflow
        safe_small = np.minimum(half_v, 0.)
        safe_large = np.maximum(half_v, 0.)
        half_b = np.where(half_v < 0.,
                          np.arcsinh(np.exp(safe_small)),
                          safe_large + np.log1p(np.sqrt(1. + np.exp(-2. * safe_large))))
        return self.integrated_beta_inverse(2. * half_b)


def check_transition_std(sigma: ArrayLike) -> None:
    if np.any(np.asarray(sigma) < MIN_TRANSITION_STD):
        raise DegenerateTransitionError('Transition std {} is below {}, the time is too close to zero.'.format(
            np.min(sigma), MIN_TRANSITION_STD))


def create_sde(config: Dict[str, Union[str, float]]) -> Sde:
    """
    Creates an SDE from a config section with keys kind, beta_min, beta_max, sigma_min, sigma_max, T, epsilon.
    Keys that do not apply to the requested kind are ignored.
    """

    kind = SdeKind(config['kind'])
    common = {key: config[key] for key in ('T', 'epsilon') if config.get(key) is not None}
    if kind == SdeKind.VE:
        params = {key: config[key] for key in ('sigma_min', 'sigma_max') if config.get(key) is not None}
        return VeSde(**params, **common)
    params = {key: config[key] for key in ('beta_min', 'beta_max') if config.get(key) is not None}
    if kind == SdeKind.VP:
        return VpSde(**params, **common)
    return SubVpSde(**params, **common)
