import os
import shutil
import tempfile
import unittest

import numpy as np
import tensorflow as tf

from scoreflow.dequant.flow import DequantFlow
from scoreflow.errors import CheckpointMismatchError
from scoreflow.model.checkpoint import load_checkpoint, save_checkpoint


class TestDequantFlow(unittest.TestCase):

    def setUp(self) -> None:
        tf.random.set_seed(42)
        np.random.seed(42)
        self.temp_dir = tempfile.mkdtemp(prefix='TestDequantFlow')
        self.flow = DequantFlow(dim=2, levels=4, num_couplings=2, hidden_units=8, seed=1)
        self.x = np.array([[0., 3.], [1., 2.], [3., 3.]])

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _randomize(self) -> None:
        params = self.flow.get_flat_params()
        self.flow.set_flat_params(0.1 * np.random.normal(size=params.shape))

    def test_identity_at_initialization(self) -> None:
        uniforms = np.random.uniform(size=(3, 2))
        u, logq = self.flow.sample_and_logq(uniforms, self.x)
        np.testing.assert_allclose(u, uniforms, rtol=0., atol=1e-12)
        np.testing.assert_array_equal(np.zeros(3), logq)

    def test_transform_roundtrip(self) -> None:
        self._randomize()
        z0 = tf.constant(np.random.normal(size=(3, 2)))
        x = tf.constant(self.x)
        z, log_det = self.flow.transform(z0, x)
        z0_back, log_det_back = self.flow.inverse_transform(z, x)
        np.testing.assert_allclose(z0_back.numpy(), z0.numpy(), rtol=0., atol=1e-10)
        np.testing.assert_allclose(log_det_back.numpy(), log_det.numpy(), rtol=0., atol=1e-10)
        u, _ = self.flow.forward(z0, x)
        z0_from_u, _ = self.flow.inverse(u, x)
        np.testing.assert_allclose(z0_from_u.numpy(), z0.numpy(), rtol=0., atol=1e-8)

    def test_log_det_matches_jacobian(self) -> None:
        self._randomize()
        x = tf.constant(self.x[:1])
        z0 = np.random.normal(size=(1, 2))
        h = 1e-6
        jacobian = np.zeros((2, 2))
        for k in range(2):
            step = np.zeros((1, 2))
            step[0, k] = h
            u_hi, _ = self.flow.forward(tf.constant(z0 + step), x)
            u_lo, _ = self.flow.forward(tf.constant(z0 - step), x)
            jacobian[:, k] = (u_hi.numpy()[0] - u_lo.numpy()[0]) / (2. * h)
        _, log_det = self.flow.forward(tf.constant(z0), x)
        self.assertAlmostEqual(np.log(abs(np.linalg.det(jacobian))), float(log_det[0]), delta=1e-5)

    def test_log_prob_matches_sampling(self) -> None:
        self._randomize()
        u, logq = self.flow.sample_and_logq(np.random.uniform(size=(3, 2)), self.x)
        self.assertTrue(np.all((u >= 0.) & (u < 1.)))
        np.testing.assert_allclose(self.flow.log_prob(tf.constant(u), tf.constant(self.x)).numpy(), logq,
                                   rtol=0., atol=1e-8)

    def test_save_load(self) -> None:
        self._randomize()
        path = os.path.join(self.temp_dir, 'dequant_flow')
        self.flow.save(path)
        loaded = DequantFlow.load(path)
        np.testing.assert_array_equal(self.flow.get_flat_params(), loaded.get_flat_params())
        header, params = load_checkpoint(path)
        header['num_couplings'] = 1
        save_checkpoint(path, header, params)
        with self.assertRaises(CheckpointMismatchError):
            DequantFlow.load(path)

    def test_invalid_levels(self) -> None:
        with self.assertRaises(ValueError):
            DequantFlow(dim=2, levels=1)
