import csv
import os
import shutil
import tempfile
import unittest

import numpy as np

from scoreflow.errors import StiffnessError
from scoreflow.solvers.rk45 import rk45_integrate
from scoreflow.solvers.solver_config import DivergenceMode, SolverConfig
from scoreflow.solvers.trajectory import dump_trajectory_csv


def decay(t, x):
    return -x


def oscillator(t, x):
    return np.stack([x[:, 1], -x[:, 0]], axis=-1)


class TestRk45(unittest.TestCase):

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp(prefix='TestRk45')

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_exponential_decay(self) -> None:
        record = rk45_integrate(decay, np.array([[1.], [2.]]), 0., 1., SolverConfig(rtol=1e-9, atol=1e-9))
        np.testing.assert_allclose(record.final_state, [[np.exp(-1.)], [2. * np.exp(-1.)]], rtol=0., atol=1e-7)
        self.assertEqual(len(record.times) - 1, record.n_accepted)
        self.assertEqual(1., record.times[-1])
        self.assertTrue(np.all(np.diff(record.times) > 0.))
        self.assertEqual((len(record.times), 2, 1), record.states.shape)

    def test_backward_in_time(self) -> None:
        record = rk45_integrate(decay, np.array([np.exp(-1.)]), 1., 0., SolverConfig(rtol=1e-9, atol=1e-9))
        self.assertAlmostEqual(1., record.final_state[0, 0], delta=1e-7)
        self.assertTrue(np.all(np.diff(record.times) < 0.))

    def test_energy_conservation(self) -> None:
        x0 = np.array([[1., 0.], [0.3, -0.8]])
        record = rk45_integrate(oscillator, x0, 0., 2. * np.pi, SolverConfig(rtol=1e-8, atol=1e-8))
        energy = 0.5 * np.sum(record.states ** 2, axis=-1)
        self.assertLess(np.max(np.abs(energy - energy[0])), 1e-6)
        np.testing.assert_allclose(record.final_state, x0, atol=1e-6)

    def test_divergence_integral(self) -> None:
        record = rk45_integrate(lambda t, x: 0.5 * x, np.ones((3, 2)), 0., 2., SolverConfig(),
                                divergence=lambda t, x: np.full(x.shape[0], 1.))
        np.testing.assert_allclose(record.delta_logp, np.full(3, 2.), rtol=1e-10)
        self.assertEqual((3, 2), record.final_state.shape)

    def test_stiffness(self) -> None:
        with self.assertRaises(StiffnessError):
            rk45_integrate(decay, np.ones((1, 1)), 0., 100., SolverConfig(max_steps=3, max_step=1.))

    def test_invalid_span(self) -> None:
        with self.assertRaises(ValueError):
            rk45_integrate(decay, np.ones((1, 1)), 1., 1.)

    def test_solver_config(self) -> None:
        cfg = SolverConfig.from_config({'rtol': 1e-3, 'divergence': 'auto', 'probe': 'gaussian'})
        self.assertEqual(DivergenceMode.EXACT, cfg.divergence_mode(16))
        self.assertEqual(DivergenceMode.HUTCHINSON, cfg.divergence_mode(17))
        self.assertEqual(cfg.to_config(), SolverConfig.from_config(cfg.to_config()).to_config())
        with self.assertRaises(ValueError):
            SolverConfig(rtol=0.)
        with self.assertRaises(ValueError):
            SolverConfig(divergence='approximate')

    def test_dump_trajectory(self) -> None:
        record = rk45_integrate(lambda t, x: -x, np.ones((2, 3)), 0., 1., divergence=lambda t, x: np.full(2, -3.))
        file_path = os.path.join(self.temp_dir, 'trajectory.csv')
        dump_trajectory_csv(record, file_path)
        with open(file_path, 'r', encoding='utf-8') as f:
            rows = list(csv.reader(f))
        self.assertEqual(['t', 'sample', 'x_0', 'x_1', 'x_2', 'delta_logp'], rows[0])
        self.assertEqual(2 * len(record.times) + 1, len(rows))
        self.assertAlmostEqual(-3., float(rows[-1][-1]), places=8)
