import logging
from typing import Callable

import numpy as np

from scoreflow.errors import StiffnessError
from scoreflow.solvers.solver_config import SolverConfig
from scoreflow.solvers.trajectory import TrajectoryRecord
from scoreflow.utils.logger import get_logger

Field = Callable[[float, np.ndarray], np.ndarray]
DivergenceFn = Callable[[float, np.ndarray], np.ndarray]

# Dormand-Prince 5(4) tableau
C = np.array([0., 1. / 5., 3. / 10., 4. / 5., 8. / 9., 1.])
A = [np.array([]),
     np.array([1. / 5.]),
     np.array([3. / 40., 9. / 40.]),
     np.array([44. / 45., -56. / 15., 32. / 9.]),
     np.array([19372. / 6561., -25360. / 2187., 64448. / 6561., -212. / 729.]),
     np.array([9017. / 3168., -355. / 33., 46732. / 5247., 49. / 176., -5103. / 18656.])]
B = np.array([35. / 384., 0., 500. / 1113., 125. / 192., -2187. / 6784., 11. / 84.])
# fifth minus fourth order weights over all seven stages, the last one being the FSAL stage
E = np.array([71. / 57600., 0., -71. / 16695., 71. / 1920., -17253. / 339200., 22. / 525., -1. / 40.])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.
ERROR_EXPONENT = -1. / 5.

logger = get_logger(__name__)


def _error_norm(error: np.ndarray, y: np.ndarray, y_new: np.ndarray, cfg: SolverConfig) -> float:
    # RMS over the state of each row, worst row decides
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.sqrt(np.mean((error / scale) ** 2, axis=-1))))


def _initial_step(field: Field, t0: float, y0: np.ndarray, f0: np.ndarray, direction: float, span: float,
                  cfg: SolverConfig) -> float:
    scale = cfg.atol + cfg.rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = field(t0 + direction * h0, y0 + direction * h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1. / 5.)
    return min(100. * h0, h1)


def rk45_integrate(field: Field,
                   x0: np.ndarray,
                   t0: float,
                   t1: float,
                   cfg: SolverConfig = None,
                   divergence: DivergenceFn = None,
                   logging_level=logging.INFO) -> TrajectoryRecord:
    """
    Integrates dx/dt = field(t, x) from t0 to t1 with the adaptive Dormand-Prince 4(5) pair.

    When a divergence callback is given the augmented state (x, delta_logp) is integrated, with
    d delta_logp / dt = divergence(t, x). Both directions of time are supported.

    Args:
        field: Vector field mapping (t, x of shape (N, D)) to an array of shape (N, D).
        x0: Initial state of shape (N, D) or (D,).
        t0: Start time.
        t1: End time, must differ from t0.
        cfg: Tolerances and step limits.
        divergence (optional): Maps (t, x) to the divergence of the field per row, shape (N,).
        logging_level: Level of the per-integration summary log.

    Returns: TrajectoryRecord with states of shape (num_times, N, D).
    """

    if t0 == t1:
        raise ValueError('Integration needs t0 != t1, got {} for both.'.format(t0))
    cfg = cfg or SolverConfig()
    logger.setLevel(logging_level)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    dim = x0.shape[-1]

    if divergence is None:
        augmented_field, y = field, x0.copy()
    else:
        def augmented_field(t, y_aug):
            x = y_aug[:, :dim]
            return np.concatenate([field(t, x), np.reshape(divergence(t, x), (-1, 1))], axis=-1)
        y = np.concatenate([x0, np.zeros((x0.shape[0], 1))], axis=-1)

    n_evaluations = 0

    def evaluate(t, state):
        nonlocal n_evaluations
        n_evaluations += 1
        return augmented_field(t, state)

    direction = 1. if t1 > t0 else -1.
    span = abs(t1 - t0)
    max_step = cfg.max_step or 0.1 * span
    t = float(t0)
    k_first = evaluate(t, y)
    h = cfg.initial_step or _initial_step(evaluate, t, y, k_first, direction, span, cfg)
    h = min(h, max_step, span)

    times, states, logps = [t], [y[:, :dim].copy()], [_logp_column(y, dim, divergence)]
    n_accepted, n_rejected, max_error = 0, 0, 0.
    for _ in range(cfg.max_steps):
        remaining = abs(t1 - t)
        h = min(h, max_step, remaining)
        if h <= 1e-14 * max(1., abs(t)):
            raise StiffnessError('Step size underflow at t={} with h={}.'.format(t, h))
        t_new = t1 if h >= remaining else t + direction * h
        dt = t_new - t
        stages = [k_first]
        for i in range(1, 6):
            stages.append(evaluate(t + C[i] * dt, y + dt * np.tensordot(A[i], np.stack(stages), axes=1)))
        y_new = y + dt * np.tensordot(B, np.stack(stages), axes=1)
        k_last = evaluate(t_new, y_new)
        stages.append(k_last)
        error = dt * np.tensordot(E, np.stack(stages), axes=1)
        error_norm = _error_norm(error, y, y_new, cfg)

        if error_norm <= 1.:
            t, y, k_first = t_new, y_new, k_last
            n_accepted += 1
            max_error = max(max_error, error_norm)
            times.append(t)
            states.append(y[:, :dim].copy())
            logps.append(_logp_column(y, dim, divergence))
            factor = MAX_FACTOR if error_norm == 0. else min(MAX_FACTOR, SAFETY * error_norm ** ERROR_EXPONENT)
            if t == t1:
                break
        else:
            n_rejected += 1
            factor = max(MIN_FACTOR, SAFETY * error_norm ** ERROR_EXPONENT)
        h = h * max(MIN_FACTOR, factor)
    else:
        raise StiffnessError('RK45 exceeded max_steps={} at t={} (accepted {}, rejected {}), '
                             'epsilon may be too small.'.format(cfg.max_steps, t, n_accepted, n_rejected))

    record = TrajectoryRecord(times, states, logps, n_accepted, n_rejected, max_error, n_evaluations)
    logger.debug('integrated {} points: {}'.format(x0.shape[0], record))
    return record


def _logp_column(y: np.ndarray, dim: int, divergence: DivergenceFn) -> np.ndarray:
    if divergence is None:
        return np.zeros(y.shape[0])
    return y[:, dim].copy()
