import numpy as np

from scoreflow.evaluation.bounds import evaluate_bounds
from scoreflow.evaluation.ode_likelihood import ode_log_likelihoods
from scoreflow.evaluation.scorer import Scorer
from scoreflow.sde.sde import Sde
from scoreflow.solvers.solver_config import SolverConfig
from scoreflow.utils.rng import make_rng


class OdeNllScorer(Scorer):
    """
    Provides the mean negative log-likelihood of the probability flow ODE in nats.
    """

    def __init__(self, sde: Sde, cfg: SolverConfig = None, seed=0) -> None:
        """
        Initializes the scorer.

        Args:
            sde: Forward SDE of the scored models.
            cfg (optional): Solver configuration of the likelihood integration.
            seed: Seed of the Hutchinson probes, every call starts from the same stream.
        """

        self.sde = sde
        self.cfg = cfg or SolverConfig()
        self.seed = seed

    def __call__(self, model, data):
        results = ode_log_likelihoods(model, self.sde, data, self.cfg, make_rng(self.seed, 'ode_nll_scorer'))
        return -float(np.mean([r.logp_nats for r in results]))


class BoundScorer(Scorer):
    """
    Provides the mean of the denoising bound on the negative log-likelihood in nats.
    """

    def __init__(self, sde: Sde, n_time_samples=100, use_importance=True, corrected=False, seed=0) -> None:
        self.sde = sde
        self.n_time_samples = n_time_samples
        self.use_importance = use_importance
        self.corrected = corrected
        self.seed = seed

    def __call__(self, model, data):
        results = evaluate_bounds(model, self.sde, data, make_rng(self.seed, 'bound_scorer'),
                                  form='dsm',
                                  corrected=self.corrected,
                                  n_time_samples=self.n_time_samples,
                                  use_importance=self.use_importance)
        return -float(np.mean([r.logp_nats for r in results]))
