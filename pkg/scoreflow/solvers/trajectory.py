import csv
from typing import List

import numpy as np


class TrajectoryRecord:
    """
    Output of one adaptive integration: accepted times and states, the accumulated divergence integral
    and step statistics. States have shape (num_times, N, D), delta_logp has shape (num_times, N).
    """

    def __init__(self,
                 times: List[float],
                 states: List[np.ndarray],
                 delta_logp: List[np.ndarray],
                 n_accepted: int,
                 n_rejected: int,
                 max_error_estimate: float,
                 n_evaluations: int) -> None:
        self.times = np.asarray(times, dtype=np.float64)
        self.states = np.stack(states)
        self.delta_logp_path = np.stack(delta_logp)
        self.n_accepted = n_accepted
        self.n_rejected = n_rejected
        self.max_error_estimate = max_error_estimate
        self.n_evaluations = n_evaluations

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def delta_logp(self) -> np.ndarray:
        return self.delta_logp_path[-1]

    def __repr__(self) -> str:
        return 'TrajectoryRecord(t={}->{}, accepted={}, rejected={}, evaluations={})'.format(
            self.times[0], self.times[-1], self.n_accepted, self.n_rejected, self.n_evaluations)


def dump_trajectory_csv(record: TrajectoryRecord, file_path: str) -> None:
    """
    Writes one row per accepted time and sample: t, sample, x_0 ... x_{D-1}, delta_logp.
    """

    dim = record.states.shape[-1]
    with open(file_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['t', 'sample'] + ['x_{}'.format(d) for d in range(dim)] + ['delta_logp'])
        for t, states, delta_logp in zip(record.times, record.states, record.delta_logp_path):
            for i, (state, logp) in enumerate(zip(states, delta_logp)):
                writer.writerow([repr(float(t)), i] + [repr(float(v)) for v in state] + [repr(float(logp))])
