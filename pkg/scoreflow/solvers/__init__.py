from .divergence import ProbabilityFlow, VectorField, divergence, draw_probes, hutchinson_samples, ode_rhs
from .rk45 import rk45_integrate
from .sde_sampler import reverse_sde_step, sample_probability_flow, sample_reverse_sde
from .solver_config import DivergenceMode, ProbeKind, SolverConfig
from .trajectory import TrajectoryRecord, dump_trajectory_csv
