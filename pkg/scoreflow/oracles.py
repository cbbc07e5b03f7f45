"""
Reference implementations for tests, independent of the rest of scoreflow.
"""
from typing import Callable

import numpy as np


def gaussian_kl(m1, v1, m2, v2) -> float:
    """
    KL(N(m1, diag v1) || N(m2, diag v2)) in nats.
    """

    m1, v1, m2, v2 = (np.asarray(a, dtype=np.float64) for a in (m1, v1, m2, v2))
    return float(0.5 * np.sum(v1 / v2 + (m2 - m1) ** 2 / v2 - 1. + np.log(v2) - np.log(v1)))


class QuadratureRule:
    """
    Composite Simpson rule with n equally spaced nodes on [a, b].
    """

    def __init__(self, a: float, b: float, n: int) -> None:
        if n < 3 or n % 2 == 0:
            raise ValueError('Simpson needs an odd number of at least 3 nodes, got {}.'.format(n))
        self.a = float(a)
        self.b = float(b)
        self.nodes = np.linspace(self.a, self.b, n)
        h = (self.b - self.a) / (n - 1)
        weights = np.ones(n)
        weights[1:-1:2] = 4.
        weights[2:-1:2] = 2.
        self.weights = weights * h / 3.

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def simpson(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, n: int) -> float:
    return QuadratureRule(a, b, n).integrate(f)


def rejection_sample_proposal(sde, rng: np.random.Generator, size=1, chunk_size=100000) -> np.ndarray:
    """
    Samples p(t) proportional to g(t)^2 / original_weighting(t) on [epsilon, T] by rejection against
    the uniform distribution.

    The envelope is 1.05 times the largest density value on a geometric grid, which covers the
    monotone pieces of the VE, VP and sub-VP densities.

    Args:
        sde: Object with epsilon, T, diffusion(t) and original_weighting(t).
        rng: Generator.
        size: Number of samples.
        chunk_size: Number of candidates per round.

    Returns: Samples of shape (size,).
    """

    def unnormalized(t):
        return sde.diffusion(t) ** 2 / sde.original_weighting(t)

    grid = np.geomspace(sde.epsilon, sde.T, 10001)
    envelope = 1.05 * np.max(unnormalized(grid))
    accepted = []
    count = 0
    while count < size:
        t = rng.uniform(sde.epsilon, sde.T, size=chunk_size)
        keep = t[rng.uniform(size=chunk_size) * envelope < unnormalized(t)]
        accepted.append(keep)
        count += keep.shape[0]
    return np.concatenate(accepted)[:size]


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h=1e-5) -> np.ndarray:
    """
    Central difference gradient of a scalar function.
    """

    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2. * h)
    return grad
