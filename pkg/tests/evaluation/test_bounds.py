import logging
import unittest

import numpy as np

from scoreflow.data.datasets import GaussianDataset, Split
from scoreflow.evaluation.bounds import (EXACT_INNER, bound_dsm, bound_ordering, bound_sm, draw_bound_times,
                                         evaluate_bounds, gaussian_kl_divergence, kl_upper_bound, prior_gap, prior_kl,
                                         tweedie_corrected_bound)
from scoreflow.evaluation.likelihood_result import LikelihoodKind, LikelihoodResult
from scoreflow.evaluation.ode_likelihood import ode_log_likelihoods
from scoreflow.model.analytic_gaussian import AnalyticGaussian
from scoreflow.model.score_mlp import ScoreMlp
from scoreflow.oracles import gaussian_kl
from scoreflow.sde.sde import SubVpSde, VeSde, VpSde
from scoreflow.solvers.solver_config import SolverConfig
from scoreflow.trainer import Trainer
from scoreflow.utils.rng import make_rng


def expected_log_marginal(model: AnalyticGaussian, x: np.ndarray, t: float) -> float:
    """
    E_{p_0t(x'|x)}[log p_t(x')] in closed form.
    """

    alpha, sigma = model.sde.transition_params(t)
    mean, variance = model.analytic_pt(t)
    return float(-0.5 * np.sum(np.log(2. * np.pi * variance) + ((alpha * x - mean) ** 2 + sigma ** 2) / variance))


class TestBounds(unittest.TestCase):

    def setUp(self) -> None:
        self.mu0, self.var0 = np.array([1., -0.5]), np.array([0.5, 2.])
        self.x = np.array([0.4, 0.9])

    def test_tightness_of_exact_score(self) -> None:
        for sde in [VeSde(), VpSde(), SubVpSde()]:
            model = AnalyticGaussian(sde, self.mu0, self.var0)
            result = bound_dsm(model, sde, self.x, n_time_samples=1000, rng=make_rng(0, sde.kind.value),
                               stratified=True, inner=EXACT_INNER)
            expected = prior_gap(sde, model, self.x)[0] - expected_log_marginal(model, self.x, sde.epsilon)
            self.assertAlmostEqual(expected, -result.logp_nats, delta=5e-3)
            self.assertEqual(LikelihoodKind.BOUND_DSM, result.kind)

    def test_prior_gap_averages_to_kl(self) -> None:
        sde = VpSde(beta_max=4.)
        model = AnalyticGaussian(sde, self.mu0, self.var0)
        x = self.mu0 + np.sqrt(self.var0) * make_rng(0).standard_normal((200000, 2))
        self.assertAlmostEqual(prior_kl(sde, model), float(np.mean(prior_gap(sde, model, x))), delta=2e-3)
        self.assertGreater(prior_kl(sde, model), 0.)

    def test_sampled_forms_agree_with_exact_inner(self) -> None:
        sde = VpSde()
        model = AnalyticGaussian(sde, self.mu0, self.var0, offset=[0.2, 0.1])
        exact = bound_dsm(model, sde, self.x, 2000, make_rng(1), stratified=True, inner=EXACT_INNER).logp_nats
        dsm = bound_dsm(model, sde, self.x, 20000, make_rng(2))
        sm = bound_sm(model, sde, self.x, 20000, make_rng(3))
        sm_hutchinson = bound_sm(model, sde, self.x, 20000, make_rng(4), cfg=SolverConfig(divergence='hutchinson'))
        for result in [dsm, sm, sm_hutchinson]:
            self.assertLess(abs(result.logp_nats - exact), 5. * result.std_error + 5e-3)
        self.assertEqual(LikelihoodKind.BOUND_SM, sm.kind)

    def test_tweedie_correction(self) -> None:
        # a large epsilon makes the truncation visible
        sde = VpSde(epsilon=0.05)
        model = AnalyticGaussian(sde, mu0=[0., 0.], var0=[0.25, 0.25])
        x = np.zeros(2)
        target = model.logpdf(x, 0.) - prior_gap(sde, model, x)[0]
        uncorrected = bound_dsm(model, sde, x, 1000, make_rng(0), stratified=True, inner=EXACT_INNER)
        corrected = tweedie_corrected_bound(model, sde, x, 1000, make_rng(0), n_correction_draws=4000,
                                            stratified=True, inner=EXACT_INNER)
        self.assertGreater(abs(uncorrected.logp_nats - target), 0.1)
        self.assertLess(abs(corrected.logp_nats - target), 0.03)
        self.assertLessEqual(corrected.logp_nats, target + 0.01)
        self.assertEqual(LikelihoodKind.BOUND_DSM_CORRECTED, corrected.kind)

    def test_evaluate_bounds(self) -> None:
        sde = VpSde()
        model = AnalyticGaussian(sde, self.mu0, self.var0)
        x = np.array([[0., 0.], [1., 1.], [2., -1.]])
        results = evaluate_bounds(model, sde, x, make_rng(0), form='dsm', corrected=True, n_time_samples=10)
        self.assertEqual(3, len(results))
        self.assertEqual(3, len(evaluate_bounds(model, sde, x, make_rng(0), form='sm', n_time_samples=10)))
        with self.assertRaises(ValueError):
            evaluate_bounds(model, sde, x, make_rng(0), form='sm', corrected=True)
        with self.assertRaises(ValueError):
            evaluate_bounds(model, sde, x, make_rng(0), form='elbo')

    def test_draw_bound_times(self) -> None:
        sde = VpSde()
        t, factors = draw_bound_times(sde, 100000, make_rng(0), use_importance=True)
        self.assertTrue(np.all((t >= sde.epsilon) & (t <= sde.T)))
        self.assertAlmostEqual(sde.T - sde.epsilon, float(np.mean(factors)), delta=0.05)
        t, factors = draw_bound_times(sde, 10, make_rng(0), use_importance=False, stratified=True)
        strata = np.floor((t - sde.epsilon) / (sde.T - sde.epsilon) * 10)
        np.testing.assert_array_equal(np.arange(10), strata)
        np.testing.assert_allclose(factors, np.full(10, sde.T - sde.epsilon))
        with self.assertRaises(ValueError):
            draw_bound_times(sde, 0, make_rng(0))

    def test_kl_upper_bound(self) -> None:
        sde = VpSde()
        exact = AnalyticGaussian(sde, self.mu0, self.var0)
        self.assertAlmostEqual(prior_kl(sde, exact), kl_upper_bound(exact, sde, exact), places=10)
        shifted = AnalyticGaussian(sde, self.mu0, self.var0, offset=[0.3, -0.2])
        integral = sde.integrated_beta(sde.T) - sde.integrated_beta(sde.epsilon)
        self.assertAlmostEqual(prior_kl(sde, exact) + 0.5 * 0.13 * integral, kl_upper_bound(shifted, sde, exact),
                               delta=1e-3)

    def test_gaussian_kl(self) -> None:
        m1, v1, m2, v2 = np.array([0., 1.]), np.array([1., 2.]), np.array([0.5, 0.]), np.array([3., 1.])
        self.assertAlmostEqual(gaussian_kl(m1, v1, m2, v2), gaussian_kl_divergence(m1, v1, m2, v2), places=12)
        self.assertAlmostEqual(0., gaussian_kl_divergence(m1, v1, m1, v1), places=12)

    def test_bound_ordering(self) -> None:
        exact = [LikelihoodResult.create(-v, LikelihoodKind.ODE_EXACT, dim=2) for v in [1., 2., 3., 4.]]
        bounds = [LikelihoodResult.create(-v, LikelihoodKind.BOUND_DSM, dim=2, std_error=0.1)
                  for v in [1.5, 1.8, 2.5, 4.]]
        ordering = bound_ordering(bounds, exact)
        self.assertEqual(0.75, ordering.fraction)
        self.assertEqual(4, ordering.n_points)
        self.assertAlmostEqual(-0.05, ordering.mean_gap_nats, places=12)
        self.assertEqual(1., bound_ordering(bounds, exact, n_std_errors=5.).fraction)
        self.assertEqual(0.5, bound_ordering(bounds, exact, n_std_errors=0., tolerance=0.).fraction)
        self.assertEqual({'fraction', 'n_points', 'mean_gap_nats', 'gap_ci_half_width'}, set(ordering.to_dict()))
        with self.assertRaises(ValueError):
            bound_ordering(bounds[:3], exact)
        with self.assertRaises(ValueError):
            bound_ordering([], [])

    def held_out_ordering(self, model, sde: VpSde, x: np.ndarray):
        exact = ode_log_likelihoods(model, sde, x)
        bounds = evaluate_bounds(model, sde, x, make_rng(0, 'ordering'), corrected=True, n_time_samples=1000,
                                 n_correction_draws=16, stratified=True)
        return bound_ordering(bounds, exact)

    def test_ordering_of_exact_score(self) -> None:
        sde = VpSde()
        model = AnalyticGaussian(sde, self.mu0, self.var0)
        x = GaussianDataset(self.mu0, self.var0).sample_split(Split.TEST, 200)
        ordering = self.held_out_ordering(model, sde, x)
        self.assertGreaterEqual(ordering.fraction, 0.95)
        self.assertLess(abs(ordering.mean_gap_nats), 2. * ordering.gap_ci_half_width + 1e-3)

    def test_ordering_of_trained_model(self) -> None:
        sde = VpSde()
        dataset = GaussianDataset(self.mu0, self.var0)
        model = ScoreMlp(sde, 2, seed=0)
        trainer = Trainer(steps=2000, batch_size=128, per_example_times=True, seed=0, logging_level=logging.ERROR)
        trainer.train_score_model(model, dataset.sample_split(Split.TRAIN, 10000))
        ordering = self.held_out_ordering(model, sde, dataset.sample_split(Split.TEST, 200))
        self.assertEqual(200, ordering.n_points)
        self.assertGreaterEqual(ordering.fraction, 0.95)
