import abc
from abc import abstractmethod

import numpy as np

from scoreflow.model.score_model import ScoreModel, TimeLike
from scoreflow.sde.sde import Sde, expand_like
from scoreflow.solvers.solver_config import DivergenceMode, ProbeKind, SolverConfig


class VectorField(abc.ABC):
    """
    Time-dependent vector field on batches of shape (N, D) with reverse-mode products.
    """

    def __init__(self, dim: int) -> None:
        self.dim = dim

    @abstractmethod
    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def vjp(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """
        Vector-Jacobian product v^T (dF/dx) per row.
        """

        pass

    def divergence(self, t: float, x: np.ndarray) -> np.ndarray:
        """
        Exact divergence per row, summed from D products with the unit vectors.
        """

        x = np.atleast_2d(x)
        total = np.zeros(x.shape[0])
        for d in range(self.dim):
            unit = np.zeros_like(x)
            unit[:, d] = 1.
            total += self.vjp(t, x, unit)[:, d]
        return total


def ode_rhs(model: ScoreModel, sde: Sde, x: np.ndarray, t: TimeLike) -> np.ndarray:
    """
    Probability flow drift f(x, t) - 1/2 g(t)^2 s(x, t).
    """

    x = np.asarray(x, dtype=np.float64)
    half_g2 = 0.5 * expand_like(sde.diffusion(t) ** 2, x)
    return sde.drift(x, t) - half_g2 * model.score(x, t)


class ProbabilityFlow(VectorField):
    """
    The probability flow ODE of a score model, whose divergence uses the closed-form drift divergence.
    """

    def __init__(self, model: ScoreModel, sde: Sde) -> None:
        super().__init__(model.dim)
        self.model = model
        self.sde = sde

    def __call__(self, t, x):
        return ode_rhs(self.model, self.sde, x, t)

    def vjp(self, t, x, v):
        return self.sde.drift_coefficient(t) * v - 0.5 * self.sde.diffusion(t) ** 2 * self.model.score_vjp(x, t, v)

    def divergence(self, t, x):
        return self.sde.drift_divergence(t, self.dim) - 0.5 * self.sde.diffusion(t) ** 2 * \
            self.model.score_divergence(x, t)


def draw_probes(rng: np.random.Generator, n_probes: int, shape, kind=ProbeKind.RADEMACHER) -> np.ndarray:
    """
    Draws probe vectors with identity covariance, returned with shape (n_probes,) + shape.
    """

    size = (n_probes,) + tuple(shape)
    if ProbeKind(kind) == ProbeKind.GAUSSIAN:
        return rng.standard_normal(size)
    return rng.choice(np.array([-1., 1.]), size=size)


def hutchinson_samples(field: VectorField, t: float, x: np.ndarray, probes: np.ndarray) -> np.ndarray:
    """
    Per-probe estimates v^T J v of the divergence, shape (n_probes, N).
    """

    x = np.atleast_2d(x)
    return np.stack([np.sum(v * field.vjp(t, x, v), axis=-1) for v in probes])


def divergence(field: VectorField,
               x: np.ndarray,
               t: float,
               cfg: SolverConfig = None,
               rng: np.random.Generator = None,
               probes: np.ndarray = None) -> np.ndarray:
    """
    Divergence of the field per row, exact or estimated with Hutchinson probes.

    Args:
        field: Vector field, e.g. a ProbabilityFlow.
        x: Points of shape (N, D).
        t: Time.
        cfg: Selects the mode, the number of probes and their distribution.
        rng (optional): Generator for drawing probes, required in Hutchinson mode without probes.
        probes (optional): Fixed probes of shape (n_probes, N, D).

    Returns: Divergence values of shape (N,).
    """

    cfg = cfg or SolverConfig()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if cfg.divergence_mode(field.dim) == DivergenceMode.EXACT:
        return field.divergence(t, x)
    if probes is None:
        if rng is None:
            raise ValueError('Hutchinson divergence needs either an rng or fixed probes.')
        probes = draw_probes(rng, cfg.n_probes, x.shape, cfg.probe)
    return np.mean(hutchinson_samples(field, t, x, probes), axis=0)
