import unittest

import numpy as np
import tensorflow as tf

from scoreflow.losses import weighted_score_loss


class TestLosses(unittest.TestCase):

    def test_weighted_score_loss(self) -> None:
        targets = tf.constant([[1., 2.], [0., -1.]], dtype=tf.float64)
        scores = tf.constant([[0., 2.], [1., 1.]], dtype=tf.float64)
        factors = tf.constant([2., 0.5], dtype=tf.float64)
        loss = weighted_score_loss(targets, scores, factors)
        # (0.5 * 2 * 1 + 0.5 * 0.5 * 5) / 2
        self.assertAlmostEqual(1.125, float(loss), places=12)

    def test_zero_residual(self) -> None:
        x = tf.constant(np.ones((3, 4)), dtype=tf.float64)
        self.assertEqual(0., float(weighted_score_loss(x, x, tf.ones(3, dtype=tf.float64))))
