import logging

import numpy as np

from scoreflow.model.score_model import ScoreModel
from scoreflow.sde.sde import Sde
from scoreflow.solvers.divergence import ProbabilityFlow
from scoreflow.solvers.rk45 import rk45_integrate
from scoreflow.solvers.solver_config import SolverConfig
from scoreflow.solvers.trajectory import TrajectoryRecord
from scoreflow.utils.logger import get_logger

logger = get_logger(__name__)


def reverse_sde_step(model: ScoreModel,
                     sde: Sde,
                     x: np.ndarray,
                     t: float,
                     dt: float,
                     rng: np.random.Generator,
                     diffusion_scale=1.) -> np.ndarray:
    """
    One Euler-Maruyama step of dx = [f(x, t) - g(t)^2 s(x, t)] dt + g(t) dw with dt < 0.

    Args:
        model: Score model.
        sde: Forward SDE.
        x: Current states of shape (N, D).
        t: Current time.
        dt: Negative time increment.
        rng: Generator for the Brownian increment.
        diffusion_scale: Multiplier of g(t), 0 gives the drift-only limit.

    Returns: States at time t + dt.
    """

    g = diffusion_scale * sde.diffusion(t)
    drift = sde.drift(x, t) - g ** 2 * model.score(x, t)
    noise = rng.standard_normal(np.shape(x))
    return x + drift * dt + g * np.sqrt(abs(dt)) * noise


def sample_reverse_sde(model: ScoreModel,
                       sde: Sde,
                       n: int,
                       rng: np.random.Generator,
                       n_steps=1000,
                       diffusion_scale=1.,
                       x_init: np.ndarray = None,
                       logging_level=logging.INFO) -> np.ndarray:
    """
    Draws n samples from the reverse SDE, starting at the prior at T and stepping on a uniform grid to epsilon.
    """

    if n_steps < 1:
        raise ValueError('The reverse SDE sampler needs n_steps >= 1, got {}.'.format(n_steps))
    logger.setLevel(logging_level)
    x = sde.prior_sample(n, model.dim, rng) if x_init is None else np.array(x_init, dtype=np.float64)
    grid = np.linspace(sde.T, sde.epsilon, n_steps + 1)
    for step, (t, t_next) in enumerate(zip(grid[:-1], grid[1:])):
        x = reverse_sde_step(model, sde, x, t, t_next - t, rng, diffusion_scale)
        if (step + 1) % max(1, n_steps // 10) == 0:
            logger.debug('reverse sde step {}/{}, t={:.5f}'.format(step + 1, n_steps, t_next))
    return x


def integrate_probability_flow(model: ScoreModel,
                               sde: Sde,
                               x: np.ndarray,
                               t0: float,
                               t1: float,
                               cfg: SolverConfig = None) -> TrajectoryRecord:
    return rk45_integrate(ProbabilityFlow(model, sde), x, t0, t1, cfg)


def sample_probability_flow(model: ScoreModel,
                            sde: Sde,
                            n: int,
                            cfg: SolverConfig,
                            rng: np.random.Generator) -> np.ndarray:
    """
    Draws n samples by integrating the probability flow ODE from prior draws at T down to epsilon.
    """

    x_T = sde.prior_sample(n, model.dim, rng)
    return integrate_probability_flow(model, sde, x_T, sde.T, sde.epsilon, cfg).final_state
