import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest

import numpy as np
import yaml

from scoreflow.cli import EXIT_CONFIG_ERROR, EXIT_INPUT_ERROR, EXIT_IO_ERROR, EXIT_SUCCESS, _continuous, main
from scoreflow.config import ExperimentConfig
from scoreflow.data.datasets import Split, create_dataset, load_csv
from scoreflow.utils.rng import make_rng


class TestCli(unittest.TestCase):

    def setUp(self) -> None:
        self.temp_dir = tempfile.mkdtemp(prefix='TestCli')
        self.output_dir = os.path.join(self.temp_dir, 'output')

    def tearDown(self) -> None:
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def write_config(self, values: dict) -> str:
        config_path = os.path.join(self.temp_dir, 'config.yaml')
        with open(config_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump({'output_dir': self.output_dir, **values}, f)
        return config_path

    def run_main(self, argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            exit_code = main(argv)
        return exit_code, stdout.getvalue(), stderr.getvalue()

    def read_output(self, name: str) -> dict:
        with open(os.path.join(self.output_dir, name), 'r', encoding='utf-8') as f:
            return json.load(f)

    def gaussian_config(self) -> dict:
        return {'seed': 1,
                'logging_level': 'error',
                'sde': {'kind': 'vp', 'epsilon': 1e-3},
                'dataset': {'kind': 'gaussian', 'mu0': [1., -0.5], 'var0': [0.5, 2.]},
                'model': {'kind': 'analytic'},
                'eval': {'n_eval_points': 4, 'n_time_samples': 200, 'n_time_nodes': 21}}

    def test_analytic_pipeline(self) -> None:
        values = self.gaussian_config()
        config_path = self.write_config(values)
        exit_code, _, _ = self.run_main(['train', '--config', config_path])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        self.assertEqual('analytic', self.read_output('train.json')['kind'])
        manifest = self.read_output('manifest_train.json')
        self.assertEqual(ExperimentConfig.from_file(config_path).hash(), manifest['config_hash'])
        self.assertEqual(1, manifest['seed'])

        exit_code, stdout, _ = self.run_main(['nll', '--config', config_path])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        nll = self.read_output('nll.json')
        self.assertEqual(nll, json.loads(stdout.strip().splitlines()[-1]))
        self.assertEqual(4, len(nll['per_point']))
        cfg = ExperimentConfig.from_file(config_path)
        dataset = create_dataset(cfg.dataset_config())
        x = dataset.sample_split(Split.TEST, 4)
        self.assertAlmostEqual(-float(np.mean(dataset.true_logpdf(x))), nll['nll_nats']['mean'], delta=0.02)

        exit_code, _, _ = self.run_main(['bound', '--config', config_path, '--corrected'])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        bound = self.read_output('bound.json')
        self.assertTrue(bound['corrected'])
        self.assertEqual('dsm', bound['form'])

        exit_code, _, _ = self.run_main(['entropy', '--config', config_path, '--form', 'divergence'])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        entropy = self.read_output('entropy.json')
        self.assertAlmostEqual(dataset.true_entropy(), entropy['true_entropy_nats'], places=12)

        trajectory_path = os.path.join(self.temp_dir, 'trajectory.csv')
        exit_code, _, _ = self.run_main(['sample', '--config', config_path, '--method', 'ode', '--n', '5',
                                         '--dump-trajectory', trajectory_path])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        self.assertEqual((5, 2), load_csv(os.path.join(self.output_dir, 'samples_ode.csv')).shape)
        self.assertTrue(os.path.isfile(trajectory_path))

    def test_bench_variance(self) -> None:
        values = self.gaussian_config()
        values['model'] = {'kind': 'mlp', 'hidden_units': 8, 'num_layers': 1, 'num_frequencies': 2}
        values['eval'].update({'bench_steps': 3, 'bench_batch_size': 8})
        config_path = self.write_config(values)
        exit_code, _, _ = self.run_main(['bench-variance', '--config', config_path])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        result = self.read_output('bench_variance.json')
        self.assertEqual({'uniform', 'importance'}, set(result['proposals']))
        with open(result['csv'], 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
        self.assertEqual('step,scheme,proposal,loss,running_variance', lines[0])
        self.assertEqual(7, len(lines))

    def test_unknown_key(self) -> None:
        config_path = self.write_config({'sde': {'kind': 'vp', 'betamax': 20.}})
        exit_code, _, stderr = self.run_main(['train', '--config', config_path])
        self.assertEqual(EXIT_CONFIG_ERROR, exit_code)
        error = json.loads(stderr.strip().splitlines()[-1])
        self.assertEqual('ConfigValidationError', error['error'])
        self.assertIn('sde.betamax', error['message'])

    def test_checkpoint_mismatch(self) -> None:
        values = self.gaussian_config()
        config_path = self.write_config(values)
        self.assertEqual(EXIT_SUCCESS, self.run_main(['train', '--config', config_path])[0])
        values['sde']['beta_max'] = 10.
        config_path = self.write_config(values)
        exit_code, _, stderr = self.run_main(['nll', '--config', config_path])
        self.assertEqual(EXIT_CONFIG_ERROR, exit_code)
        self.assertEqual('CheckpointMismatchError', json.loads(stderr.strip().splitlines()[-1])['error'])

    def test_missing_config(self) -> None:
        exit_code, _, _ = self.run_main(['nll', '--config', os.path.join(self.temp_dir, 'missing.yaml')])
        self.assertEqual(EXIT_IO_ERROR, exit_code)

    def test_invalid_dataset_values(self) -> None:
        config_path = self.write_config({'dataset': {'kind': 'mixture', 'weights': [0.3, 0.3]}})
        exit_code, _, stderr = self.run_main(['train', '--config', config_path])
        self.assertEqual(EXIT_CONFIG_ERROR, exit_code)
        error = json.loads(stderr.strip().splitlines()[-1])
        self.assertEqual('ConfigValidationError', error['error'])
        self.assertIn('sum to 1', error['message'])

    def test_invalid_arguments(self) -> None:
        config_path = self.write_config(self.gaussian_config())
        self.assertEqual(EXIT_SUCCESS, self.run_main(['train', '--config', config_path])[0])
        exit_code, _, stderr = self.run_main(['bound', '--config', config_path, '--form', 'sm', '--corrected'])
        self.assertEqual(EXIT_INPUT_ERROR, exit_code)
        error = json.loads(stderr.strip().splitlines()[-1])
        self.assertEqual('ValueError', error['error'])
        self.assertEqual(EXIT_INPUT_ERROR, error['exit_code'])

    def test_dequantization_stream_advances(self) -> None:
        cfg = ExperimentConfig({'dataset': {'kind': 'discrete_image', 'side': 2, 'levels': 4}})
        dataset = create_dataset(cfg.dataset_config())
        x = dataset.sample_split(Split.TRAIN, 8)
        rng = make_rng(cfg['seed'], 'dequantize', Split.TRAIN.value)
        first = _continuous(cfg, dataset, x, Split.TRAIN, rng)
        second = _continuous(cfg, dataset, x, Split.TRAIN, rng)
        self.assertFalse(np.array_equal(first, second))
        np.testing.assert_array_equal(np.floor(first * 4), x)
        np.testing.assert_array_equal(np.floor(second * 4), x)
        np.testing.assert_array_equal(first, _continuous(cfg, dataset, x, Split.TRAIN))

    def test_compare(self) -> None:
        config_path = self.write_config(self.gaussian_config())
        self.assertEqual(EXIT_SUCCESS, self.run_main(['train', '--config', config_path])[0])
        exit_code, _, _ = self.run_main(['compare', '--config', config_path])
        self.assertEqual(EXIT_IO_ERROR, exit_code)
        self.assertEqual(EXIT_SUCCESS, self.run_main(['nll', '--config', config_path])[0])
        self.assertEqual(EXIT_SUCCESS, self.run_main(['bound', '--config', config_path, '--corrected'])[0])
        exit_code, _, _ = self.run_main(['compare', '--config', config_path, '--n-std-errors', '4'])
        self.assertEqual(EXIT_SUCCESS, exit_code)
        result = self.read_output('compare.json')
        self.assertEqual('bound_dsm_corrected', result['bound_kind'])
        self.assertEqual(4, result['n_points'])
        self.assertEqual(4., result['n_std_errors'])
        self.assertGreaterEqual(result['fraction'], 0.75)
