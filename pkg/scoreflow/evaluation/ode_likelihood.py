import logging
from typing import List

import numpy as np

from scoreflow.evaluation.likelihood_result import LikelihoodKind, LikelihoodResult
from scoreflow.model.score_model import ScoreModel
from scoreflow.sde.sde import Sde
from scoreflow.solvers.divergence import ProbabilityFlow, divergence, draw_probes
from scoreflow.solvers.rk45 import rk45_integrate
from scoreflow.solvers.solver_config import DivergenceMode, SolverConfig
from scoreflow.solvers.trajectory import TrajectoryRecord, dump_trajectory_csv


def integrate_log_likelihood(model: ScoreModel,
                             sde: Sde,
                             x: np.ndarray,
                             cfg: SolverConfig = None,
                             rng: np.random.Generator = None,
                             logging_level=logging.INFO) -> TrajectoryRecord:
    """
    Integrates the augmented probability flow from (x, 0) at epsilon to T.

    Hutchinson probes are drawn once per integration and held fixed along the trajectory.
    """

    cfg = cfg or SolverConfig()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    field = ProbabilityFlow(model, sde)
    probes = None
    if cfg.divergence_mode(field.dim) == DivergenceMode.HUTCHINSON:
        if rng is None:
            raise ValueError('Hutchinson divergence needs an rng for drawing the probes.')
        probes = draw_probes(rng, cfg.n_probes, x.shape, cfg.probe)

    def divergence_fn(t, x_t):
        return divergence(field, x_t, t, cfg, probes=probes)

    return rk45_integrate(field, x, sde.epsilon, sde.T, cfg, divergence=divergence_fn, logging_level=logging_level)


def ode_log_likelihoods(model: ScoreModel,
                        sde: Sde,
                        x: np.ndarray,
                        cfg: SolverConfig = None,
                        rng: np.random.Generator = None,
                        levels: int = None,
                        trajectory_path: str = None) -> List[LikelihoodResult]:
    """
    Exact log-likelihoods of the probability flow ODE for a batch of points, log pi(x(T)) + delta_logp.

    Args:
        model: Score model.
        sde: Forward SDE.
        x: Points of shape (N, D).
        cfg: Solver configuration.
        rng (optional): Generator for Hutchinson probes.
        levels (optional): Number of discrete levels for the bits/dim conversion of dequantized data.
        trajectory_path (optional): CSV file receiving the integrated trajectory.

    Returns: One LikelihoodResult per row of x.
    """

    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    record = integrate_log_likelihood(model, sde, x, cfg, rng)
    if trajectory_path is not None:
        dump_trajectory_csv(record, trajectory_path)
    logp = sde.prior_logpdf(record.final_state) + record.delta_logp
    return [LikelihoodResult.create(value, LikelihoodKind.ODE_EXACT, x.shape[-1], levels=levels) for value in logp]


def ode_log_likelihood(model: ScoreModel,
                       sde: Sde,
                       x: np.ndarray,
                       cfg: SolverConfig = None,
                       rng: np.random.Generator = None,
                       levels: int = None) -> LikelihoodResult:
    return ode_log_likelihoods(model, sde, np.reshape(x, (1, -1)), cfg, rng, levels)[0]
