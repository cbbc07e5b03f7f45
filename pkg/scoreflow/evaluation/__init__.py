from .bounds import (bound_dsm, bound_sm, evaluate_bounds, kl_upper_bound, prior_gap, prior_kl,
                     tweedie_corrected_bound)
from .entropy import entropy_estimate, gaussian_entropy
from .likelihood_result import (EntropyEstimate, EntropyForm, LikelihoodKind, LikelihoodResult, Summary,
                                bits_per_dim, summarize)
from .likelihood_scorer import BoundScorer, OdeNllScorer
from .ode_likelihood import ode_log_likelihood, ode_log_likelihoods
from .scorer import Scorer
