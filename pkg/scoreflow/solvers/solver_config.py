from enum import Enum
from typing import Any, Dict

MAX_EXACT_DIVERGENCE_DIM = 16


class DivergenceMode(str, Enum):
    AUTO = 'auto'
    EXACT = 'exact'
    HUTCHINSON = 'hutchinson'


class ProbeKind(str, Enum):
    RADEMACHER = 'rademacher'
    GAUSSIAN = 'gaussian'


class SolverConfig:

    def __init__(self,
                 rtol=1e-5,
                 atol=1e-5,
                 max_steps=10000,
                 initial_step=None,
                 max_step=None,
                 divergence='auto',
                 n_probes=1,
                 probe='rademacher',
                 sde_steps=1000) -> None:
        """
        Initializes the solver configuration.

        Args:
            rtol: Relative tolerance of the adaptive ODE solver.
            atol: Absolute tolerance of the adaptive ODE solver.
            max_steps: Maximum number of attempted steps before the integration is declared stiff.
            initial_step (optional): First step size, estimated from the field if None.
            max_step (optional): Upper bound of the step size, defaults to a tenth of the time span.
            divergence: 'exact', 'hutchinson' or 'auto' (exact up to dimension 16).
            n_probes: Number of probe vectors of the Hutchinson estimator.
            probe: Probe distribution, 'rademacher' or 'gaussian'.
            sde_steps: Number of Euler-Maruyama steps of the reverse SDE sampler.
        """

        if rtol <= 0. or atol <= 0.:
            raise ValueError('Solver tolerances must be positive, got rtol={}, atol={}.'.format(rtol, atol))
        if max_steps < 1 or n_probes < 1 or sde_steps < 1:
            raise ValueError('Expected max_steps, n_probes and sde_steps >= 1, got {}, {} and {}.'.format(
                max_steps, n_probes, sde_steps))
        for step in (initial_step, max_step):
            if step is not None and step <= 0.:
                raise ValueError('Step sizes must be positive, got {}.'.format(step))
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.max_steps = int(max_steps)
        self.initial_step = initial_step
        self.max_step = max_step
        self.divergence = DivergenceMode(divergence)
        self.n_probes = int(n_probes)
        self.probe = ProbeKind(probe)
        self.sde_steps = int(sde_steps)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'SolverConfig':
        return cls(**config)

    def divergence_mode(self, dim: int) -> DivergenceMode:
        if self.divergence == DivergenceMode.AUTO:
            return DivergenceMode.EXACT if dim <= MAX_EXACT_DIVERGENCE_DIM else DivergenceMode.HUTCHINSON
        return self.divergence

    def to_config(self) -> Dict[str, Any]:
        return {'rtol': self.rtol, 'atol': self.atol, 'max_steps': self.max_steps,
                'initial_step': self.initial_step, 'max_step': self.max_step,
                'divergence': self.divergence.value, 'n_probes': self.n_probes,
                'probe': self.probe.value, 'sde_steps': self.sde_steps}
