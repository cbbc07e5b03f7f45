from enum import Enum
from typing import Dict, NamedTuple, Sequence, Union

import numpy as np
from scipy import stats


class LikelihoodKind(str, Enum):
    ODE_EXACT = 'ode_exact'
    BOUND_DSM = 'bound_dsm'
    BOUND_SM = 'bound_sm'
    BOUND_DSM_CORRECTED = 'bound_dsm_corrected'


class EntropyForm(str, Enum):
    DRIFT_DOT_SCORE = 'drift'
    DIVERGENCE = 'divergence'


def bits_per_dim(logp_nats: Union[float, np.ndarray], dim: int, levels: int = None) -> Union[float, np.ndarray]:
    """
    Converts a log-likelihood in nats to bits per dimension.

    Args:
        logp_nats: Log-likelihood of data scaled to [0, 1).
        dim: Data dimension D.
        levels (optional): Number of discrete levels L, adds log2(L) for the rescaling to the original grid.

    Returns: -logp / (D ln 2) [+ log2 L].
    """

    bpd = -np.asarray(logp_nats, dtype=np.float64) / (dim * np.log(2.))
    if levels is not None:
        bpd = bpd + np.log2(levels)
    return bpd if np.ndim(bpd) else float(bpd)


class LikelihoodResult(NamedTuple):
    """
    Log-likelihood of one datapoint, exact or a negated upper bound on -log p, in nats.
    """

    logp_nats: float
    kind: LikelihoodKind
    n_time_samples: int
    std_error: float
    bits_per_dim: float

    @classmethod
    def create(cls,
               logp_nats: float,
               kind: LikelihoodKind,
               dim: int,
               n_time_samples=0,
               std_error=0.,
               levels: int = None) -> 'LikelihoodResult':
        return cls(float(logp_nats), kind, int(n_time_samples), float(std_error),
                   bits_per_dim(float(logp_nats), dim, levels))

    def to_dict(self, index: int = None) -> Dict[str, Union[int, float, str]]:
        result = {'logp_nats': self.logp_nats, 'bits_per_dim': self.bits_per_dim, 'std_error': self.std_error,
                  'n_time_samples': self.n_time_samples, 'kind': self.kind.value}
        if index is not None:
            result = {'index': index, **result}
        return result

    @classmethod
    def from_dict(cls, values: Dict[str, Union[int, float, str]]) -> 'LikelihoodResult':
        return cls(float(values['logp_nats']), LikelihoodKind(values['kind']), int(values.get('n_time_samples', 0)),
                   float(values['std_error']), float(values['bits_per_dim']))


class EntropyEstimate(NamedTuple):
    value_nats: float
    form: EntropyForm
    std_error: float


class Summary(NamedTuple):
    """
    Mean of per-datapoint values with the half-width of a Student's t confidence interval.
    """

    mean: float
    ci_half_width: float
    n: int

    def to_dict(self) -> Dict[str, Union[int, float]]:
        return {'mean': self.mean, 'ci_half_width': self.ci_half_width, 'n': self.n}


def summarize(values: Sequence[float], confidence=0.95) -> Summary:
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n == 0:
        raise ValueError('Cannot summarize an empty sequence of values.')
    if n == 1:
        return Summary(float(values[0]), float('nan'), 1)
    sem = np.std(values, ddof=1) / np.sqrt(n)
    half_width = stats.t.ppf(0.5 + confidence / 2., df=n - 1) * sem
    return Summary(float(np.mean(values)), float(half_width), n)
