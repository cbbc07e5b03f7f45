import unittest

import numpy as np

from scoreflow.evaluation.likelihood_result import LikelihoodKind, LikelihoodResult, bits_per_dim, summarize


class TestLikelihoodResult(unittest.TestCase):

    def test_bits_per_dim(self) -> None:
        self.assertAlmostEqual(1., bits_per_dim(-2. * np.log(2.), dim=2), places=12)
        self.assertAlmostEqual(9., bits_per_dim(-2. * np.log(2.), dim=2, levels=256), places=12)
        np.testing.assert_allclose(bits_per_dim(np.array([0., -np.log(2.)]), dim=1), [0., 1.])

    def test_create_and_to_dict(self) -> None:
        result = LikelihoodResult.create(-3., LikelihoodKind.BOUND_DSM, dim=3, n_time_samples=10, std_error=0.1)
        self.assertAlmostEqual(1. / np.log(2.), result.bits_per_dim, places=12)
        result_dict = result.to_dict(index=4)
        self.assertEqual(4, result_dict['index'])
        self.assertEqual('bound_dsm', result_dict['kind'])
        self.assertEqual(-3., result_dict['logp_nats'])
        self.assertEqual(10, result_dict['n_time_samples'])
        self.assertEqual(result, LikelihoodResult.from_dict(result_dict))

    def test_summarize(self) -> None:
        summary = summarize([1., 2., 3.])
        self.assertAlmostEqual(2., summary.mean, places=12)
        self.assertAlmostEqual(2.48413771, summary.ci_half_width, places=6)
        self.assertEqual(3, summary.n)
        self.assertTrue(np.isnan(summarize([1.]).ci_half_width))
        with self.assertRaises(ValueError):
            summarize([])
