import unittest

import numpy as np
from scipy import stats
from scipy.integrate import simpson

from scoreflow.data.datasets import GaussianDataset
from scoreflow.errors import UnsupportedOperationError
from scoreflow.model.analytic_gaussian import AnalyticGaussian
from scoreflow.model.score_mlp import ScoreMlp
from scoreflow.objectives import (Proposal, TimeProposal, denoising_batch, dsm_loss_at, mc_objective_importance,
                                  mc_objective_uniform, quadrature_dsm, quadrature_nodes, quadrature_sm,
                                  sample_objective_estimates, sm_loss_at, zero_model_sm)
from scoreflow.oracles import rejection_sample_proposal
from scoreflow.sde.sde import SubVpSde, VeSde, VpSde
from scoreflow.sde.weighting import WeightingScheme
from scoreflow.utils.rng import make_rng


class ScoreOnly:

    def __init__(self, score_fn) -> None:
        self.score_fn = score_fn

    def score(self, x, t):
        return self.score_fn(x, t)


class TestObjectives(unittest.TestCase):

    def setUp(self) -> None:
        self.sde = VpSde(epsilon=1e-2)
        self.mu0, self.var0 = np.array([1., -0.5]), np.array([0.5, 2.])
        self.data = GaussianDataset(self.mu0, self.var0)
        self.exact = AnalyticGaussian(self.sde, self.mu0, self.var0)
        self.shifted = AnalyticGaussian(self.sde, self.mu0, self.var0, offset=[0.3, -0.2])

    def test_time_proposal_normalized(self) -> None:
        for sde in [VeSde(), VpSde(), SubVpSde()]:
            proposal = TimeProposal(sde)
            nodes = np.geomspace(sde.epsilon, sde.T, 4001)
            mass = simpson(proposal.density(nodes) * nodes, x=np.log(nodes))
            self.assertAlmostEqual(1., mass, places=5)
            self.assertAlmostEqual(0., proposal.cdf(sde.epsilon), places=12)
            self.assertAlmostEqual(1., proposal.cdf(sde.T), places=12)
            t = np.array([0.02, 0.2, 0.8])
            np.testing.assert_allclose(proposal.inverse_cdf(proposal.cdf(t)), t, rtol=1e-9)

    def test_time_proposal_matches_rejection_sampler(self) -> None:
        for sde in [VpSde(), SubVpSde()]:
            proposal = TimeProposal(sde)
            samples = rejection_sample_proposal(sde, make_rng(0, 'rejection', sde.kind.value), size=5000)
            _, p_value = stats.kstest(samples, proposal.cdf)
            self.assertGreater(p_value, 1e-3)

    def test_importance_factor(self) -> None:
        proposal = TimeProposal(self.sde)
        t = np.array([0.05, 0.5])
        np.testing.assert_allclose(proposal.density(t) * proposal.importance_factor(t), self.sde.diffusion(t) ** 2,
                                   rtol=1e-12)

    def test_dsm_loss_at_shapes(self) -> None:
        rng = np.random.default_rng(0)
        scheme = WeightingScheme.likelihood()
        self.assertIsInstance(float(dsm_loss_at(self.exact, self.sde, self.mu0, 0.5, rng, scheme)), float)
        losses = dsm_loss_at(self.exact, self.sde, np.zeros((4, 2)), np.linspace(0.1, 1., 4), rng, scheme)
        self.assertEqual((4,), losses.shape)
        self.assertTrue(np.all(losses >= 0.))

    def test_sm_loss_of_exact_score(self) -> None:
        mean, variance = self.exact.analytic_pt(0.4)
        loss = sm_loss_at(self.exact, self.sde, mean, variance, 0.4, np.random.default_rng(0),
                          WeightingScheme.likelihood(), n_samples=10)
        self.assertAlmostEqual(0., loss, places=12)
        shifted = sm_loss_at(self.shifted, self.sde, mean, variance, 0.4, np.random.default_rng(0),
                             WeightingScheme.likelihood())
        self.assertAlmostEqual(0.5 * self.sde.diffusion(0.4) ** 2 * 0.13, shifted, places=10)

    def test_unbiased_estimates(self) -> None:
        scheme = WeightingScheme.likelihood()
        expected = quadrature_dsm(self.shifted, self.sde, self.data, scheme, n_nodes=2001, spacing='log')
        x0 = self.data.sample_batch(200000, make_rng(0, 'unbiased', 'data'))
        for proposal in Proposal:
            values = sample_objective_estimates(self.shifted, self.sde, x0, make_rng(0, 'unbiased', proposal.value),
                                                scheme, proposal)
            std_error = np.std(values, ddof=1) / np.sqrt(values.shape[0])
            self.assertLess(abs(np.mean(values) - expected), 5. * std_error)

    def test_importance_reduces_variance(self) -> None:
        scheme = WeightingScheme.likelihood()
        x0 = self.data.sample_batch(20000, make_rng(0, 'variance', 'data'))
        uniform = sample_objective_estimates(self.exact, self.sde, x0, make_rng(1), scheme, Proposal.UNIFORM)
        importance = sample_objective_estimates(self.exact, self.sde, x0, make_rng(2), scheme, Proposal.IMPORTANCE)
        self.assertLess(np.var(importance), np.var(uniform))

    def test_importance_requires_likelihood_weighting(self) -> None:
        with self.assertRaises(ValueError):
            sample_objective_estimates(self.exact, self.sde, np.zeros((2, 2)), make_rng(0),
                                       WeightingScheme.original(), Proposal.IMPORTANCE)

    def test_mc_objectives(self) -> None:
        batch = self.data.sample_batch(16, make_rng(0))
        uniform = mc_objective_uniform(self.exact, self.sde, batch, make_rng(1), WeightingScheme.original())
        self.assertEqual(Proposal.UNIFORM, uniform.proposal)
        self.assertEqual((), np.shape(uniform.t_sampled))
        importance = mc_objective_importance(self.exact, self.sde, batch, make_rng(1), per_example_times=True)
        self.assertEqual(Proposal.IMPORTANCE, importance.proposal)
        self.assertEqual((16,), importance.t_sampled.shape)
        self.assertTrue(np.all(importance.t_sampled >= self.sde.epsilon))
        with self.assertRaises(ValueError):
            mc_objective_uniform(self.exact, self.sde, np.zeros((0, 2)), make_rng(1), WeightingScheme.original())

    def test_denoising_batch_matches_objective(self) -> None:
        batch = self.data.sample_batch(32, make_rng(0))
        scheme = WeightingScheme.likelihood()
        x_t, t, targets, factors = denoising_batch(self.sde, batch, make_rng(5), scheme, Proposal.UNIFORM,
                                                   per_example_times=True)
        value = np.mean(0.5 * factors * np.sum((targets - self.shifted.score(x_t, t)) ** 2, axis=-1))
        estimate = mc_objective_uniform(self.shifted, self.sde, batch, make_rng(5), scheme, per_example_times=True)
        self.assertAlmostEqual(estimate.value, value, places=10)
        self.assertEqual((32,), factors.shape)

    def test_dsm_sm_differ_by_constant(self) -> None:
        scheme = WeightingScheme.likelihood()
        gaps = [quadrature_dsm(model, self.sde, self.data, scheme, n_nodes=401, spacing='log') -
                quadrature_sm(model, self.sde, self.data, scheme, n_nodes=401, spacing='log')
                for model in [self.exact, self.shifted]]
        self.assertAlmostEqual(gaps[0], gaps[1], places=8)
        self.assertAlmostEqual(0., quadrature_sm(self.exact, self.sde, self.data, scheme), places=12)

    def test_constant_offset(self) -> None:
        # J_SM of s + c is ||c||^2 / 2 times the integral of g^2, which Simpson integrates exactly for VP
        value = quadrature_sm(self.shifted, self.sde, self.data, WeightingScheme.likelihood(), n_nodes=101)
        integral = self.sde.integrated_beta(self.sde.T) - self.sde.integrated_beta(self.sde.epsilon)
        self.assertAlmostEqual(0.5 * 0.13 * integral, value, places=10)

    def test_quadrature_needs_affine_model(self) -> None:
        model = ScoreMlp(self.sde, dim=2, hidden_units=4, num_layers=1, num_frequencies=1)
        with self.assertRaises(UnsupportedOperationError):
            quadrature_dsm(model, self.sde, self.data, WeightingScheme.likelihood(), n_nodes=9)
        value = quadrature_dsm(model, self.sde, self.data, WeightingScheme.likelihood(), n_nodes=9,
                               rng=make_rng(0), n_inner=50)
        self.assertTrue(np.isfinite(value))

    def test_quadrature_sm_sampled_inner(self) -> None:
        scheme = WeightingScheme.likelihood()
        shifted = ScoreOnly(self.shifted.score)
        with self.assertRaises(UnsupportedOperationError):
            quadrature_sm(shifted, self.sde, self.data, scheme, n_nodes=9)
        # a constant offset leaves no sampling noise in the residual
        self.assertAlmostEqual(quadrature_sm(self.shifted, self.sde, self.data, scheme, n_nodes=101),
                               quadrature_sm(shifted, self.sde, self.data, scheme, n_nodes=101, rng=make_rng(0),
                                             n_inner=10),
                               places=8)
        zero = ScoreOnly(lambda x, t: np.zeros_like(x))
        baseline = zero_model_sm(self.sde, self.data, scheme, n_nodes=101, spacing='log')
        sampled = quadrature_sm(zero, self.sde, self.data, scheme, n_nodes=101, spacing='log', rng=make_rng(1),
                                n_inner=20000)
        self.assertAlmostEqual(baseline, sampled, delta=0.01 * baseline)
        self.assertGreater(baseline, 0.)

    def test_quadrature_nodes(self) -> None:
        nodes = quadrature_nodes(self.sde, 9, 'log')
        self.assertAlmostEqual(self.sde.epsilon, nodes[0], places=15)
        self.assertAlmostEqual(self.sde.T, nodes[-1], places=15)
        with self.assertRaises(ValueError):
            quadrature_nodes(self.sde, 10)
        with self.assertRaises(ValueError):
            quadrature_nodes(self.sde, 9, 'cubic')
