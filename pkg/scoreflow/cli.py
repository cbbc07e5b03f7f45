import argparse
import csv
import json
import os
import platform
import sys
from typing import Any, Dict, List

import numpy as np
import scipy
import tensorflow as tf
import yaml

import scoreflow
from scoreflow.config import ExperimentConfig
from scoreflow.data.datasets import Dataset, Split, create_dataset, dump_csv
from scoreflow.dequant.flow import DequantFlow
from scoreflow.dequant.objective import dequant_bound_samples, uniform_dequantize
from scoreflow.errors import CheckpointMismatchError, ConfigValidationError, NumericalError, UnsupportedOperationError
from scoreflow.evaluation.bounds import bound_ordering, evaluate_bounds
from scoreflow.evaluation.entropy import entropy_estimate
from scoreflow.evaluation.likelihood_result import EntropyForm, LikelihoodResult, bits_per_dim, summarize
from scoreflow.evaluation.likelihood_scorer import BoundScorer
from scoreflow.evaluation.ode_likelihood import ode_log_likelihoods
from scoreflow.model.analytic_gaussian import AnalyticGaussian
from scoreflow.model.checkpoint import check_header, params_hash
from scoreflow.model.loader import load_score_model
from scoreflow.model.score_mlp import ScoreMlp
from scoreflow.model.score_model import ScoreModel
from scoreflow.objectives import Proposal, mc_objective_importance, mc_objective_uniform
from scoreflow.sde.sde import create_sde
from scoreflow.sde.weighting import WeightingScheme
from scoreflow.solvers.sde_sampler import integrate_probability_flow, sample_reverse_sde
from scoreflow.solvers.solver_config import SolverConfig
from scoreflow.solvers.trajectory import dump_trajectory_csv
from scoreflow.trainer import Trainer
from scoreflow.utils.logger import get_logger, set_logging_level
from scoreflow.utils.rng import make_rng

EXIT_SUCCESS = 0
EXIT_INPUT_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3
EXIT_IO_ERROR = 4

SCORE_MODEL_DIR = 'score_model'
FLOW_DIR = 'dequant_flow'

logger = get_logger(__name__)


def _write_json(result: Dict[str, Any], out_path: str) -> None:
    with open(out_path, 'w', encoding='utf-8') as f:
        json.dump(result, f, indent=2, sort_keys=True)
    logger.info('wrote {}'.format(out_path))


def write_manifest(cfg: ExperimentConfig, command: str, argv: List[str]) -> str:
    """
    Writes the config hash, seed and package versions of a run next to its outputs.
    """

    manifest = {'command': command,
                'argv': argv,
                'config_hash': cfg.hash(),
                'seed': cfg['seed'],
                'config': cfg.values,
                'versions': {'scoreflow': scoreflow.__version__,
                             'numpy': np.__version__,
                             'scipy': scipy.__version__,
                             'tensorflow': tf.__version__,
                             'pyyaml': yaml.__version__,
                             'python': platform.python_version()}}
    out_path = cfg.output_path('manifest_{}.json'.format(command.replace('-', '_')))
    _write_json(manifest, out_path)
    return out_path


def _continuous(cfg: ExperimentConfig,
                dataset: Dataset,
                x: np.ndarray,
                split: Split,
                rng: np.random.Generator = None) -> np.ndarray:
    if not dataset.is_discrete:
        return x
    if rng is None:
        rng = make_rng(cfg['seed'], 'dequantize', split.value)
    return uniform_dequantize(x, dataset.levels, rng)


def _eval_data(cfg: ExperimentConfig, dataset: Dataset) -> np.ndarray:
    x = dataset.sample_split(Split.TEST, cfg['eval']['n_eval_points'])
    return _continuous(cfg, dataset, x, Split.TEST)


def _checkpoint_path(cfg: ExperimentConfig, args) -> str:
    return args.checkpoint or cfg.output_path(SCORE_MODEL_DIR)


def load_checked_model(cfg: ExperimentConfig, dataset: Dataset, path: str) -> ScoreModel:
    """
    Loads a score model checkpoint and checks that its header agrees with the configuration.
    """

    model = load_score_model(path)
    expected = {'dim': dataset.dim, 'sde': create_sde(cfg.section('sde')).to_config()}
    if isinstance(model, ScoreMlp):
        expected.update({key: cfg['model'][key] for key in ('hidden_units', 'num_layers', 'num_frequencies')})
    check_header(model.header(), expected)
    return model


def _summary(values: np.ndarray, cfg: ExperimentConfig) -> Dict[str, Any]:
    return summarize(values, cfg['eval']['confidence']).to_dict()


def run_train(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    sde = create_sde(cfg.section('sde'))
    path = _checkpoint_path(cfg, args)
    if cfg['model']['kind'] == 'analytic':
        if not hasattr(dataset, 'mu0'):
            raise ConfigValidationError('Config key model.kind=analytic requires dataset.kind=gaussian.')
        AnalyticGaussian(sde, dataset.mu0, dataset.var0).save(path)
        return {'checkpoint': path, 'kind': 'analytic'}
    model_cfg = cfg['model']
    model = ScoreMlp(sde,
                     dataset.dim,
                     hidden_units=model_cfg['hidden_units'],
                     num_layers=model_cfg['num_layers'],
                     num_frequencies=model_cfg['num_frequencies'],
                     embedding_scale=model_cfg['embedding_scale'],
                     scale_by_std=model_cfg['scale_by_std'],
                     seed=cfg['seed'])
    train_data = _continuous(cfg, dataset, dataset.sample_split(Split.TRAIN, cfg['dataset']['n_train']), Split.TRAIN)
    val_data = _continuous(cfg, dataset, dataset.sample_split(Split.TEST, cfg['dataset']['n_test']), Split.TEST)
    trainer = Trainer.from_config(cfg.trainer_config(),
                                  model_save_path=path,
                                  loss_history_path=cfg.output_path('loss_history.csv'))
    scorers = {'bound_val': BoundScorer(sde, n_time_samples=100, use_importance=cfg['eval']['use_importance'],
                                        seed=cfg['seed'])}
    history = trainer.train_score_model(model, train_data, val_data[:cfg['eval']['n_eval_points']], scorers=scorers)
    return {'checkpoint': path, 'kind': 'mlp', 'steps': len(history), 'final_loss': history[-1].value,
            'params_sha256': params_hash(model.get_flat_params())}


def run_sample(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    model = load_checked_model(cfg, dataset, _checkpoint_path(cfg, args))
    solver_cfg = SolverConfig.from_config(cfg.section('solver'))
    rng = make_rng(cfg['seed'], 'sample', args.method)
    if args.method == 'sde':
        samples = sample_reverse_sde(model, model.sde, args.n, rng, n_steps=solver_cfg.sde_steps)
    else:
        x_T = model.sde.prior_sample(args.n, model.dim, rng)
        record = integrate_probability_flow(model, model.sde, x_T, model.sde.T, model.sde.epsilon, solver_cfg)
        if args.dump_trajectory:
            dump_trajectory_csv(record, args.dump_trajectory)
        samples = record.final_state
    out_path = cfg.output_path('samples_{}.csv'.format(args.method))
    dump_csv(samples, out_path)
    return {'samples': out_path, 'method': args.method, 'n': args.n,
            'mean': np.mean(samples, axis=0).tolist(), 'variance': np.var(samples, axis=0, ddof=1).tolist()}


def run_nll(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    model = load_checked_model(cfg, dataset, _checkpoint_path(cfg, args))
    x = _eval_data(cfg, dataset)
    results = ode_log_likelihoods(model, model.sde, x, SolverConfig.from_config(cfg.section('solver')),
                                  make_rng(cfg['seed'], 'nll'), levels=dataset.levels,
                                  trajectory_path=args.dump_trajectory)
    nll = np.array([-r.logp_nats for r in results])
    return {'per_point': [r.to_dict(i) for i, r in enumerate(results)],
            'nll_nats': _summary(nll, cfg),
            'bits_per_dim': _summary(np.array([r.bits_per_dim for r in results]), cfg)}


def run_bound(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    model = load_checked_model(cfg, dataset, _checkpoint_path(cfg, args))
    x = _eval_data(cfg, dataset)
    eval_cfg = cfg['eval']
    kwargs = {'n_time_samples': eval_cfg['n_time_samples'], 'use_importance': eval_cfg['use_importance'],
              'levels': dataset.levels}
    if args.form == 'sm':
        kwargs['cfg'] = SolverConfig.from_config(cfg.section('solver'))
    if args.corrected:
        kwargs['n_correction_draws'] = eval_cfg['n_correction_draws']
    results = evaluate_bounds(model, model.sde, x, make_rng(cfg['seed'], 'bound', args.form),
                              form=args.form, corrected=args.corrected, **kwargs)
    return {'form': args.form,
            'corrected': args.corrected,
            'per_point': [r.to_dict(i) for i, r in enumerate(results)],
            'bound_nats': _summary(np.array([-r.logp_nats for r in results]), cfg),
            'bits_per_dim': _summary(np.array([r.bits_per_dim for r in results]), cfg)}


def run_entropy(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    model = load_checked_model(cfg, dataset, _checkpoint_path(cfg, args))
    x = _eval_data(cfg, dataset)
    estimate = entropy_estimate(model, model.sde, x, EntropyForm(args.form), make_rng(cfg['seed'], 'entropy'),
                                n_time_nodes=cfg['eval']['n_time_nodes'])
    result = {'form': estimate.form.value, 'entropy_nats': estimate.value_nats, 'std_error': estimate.std_error}
    try:
        result['true_entropy_nats'] = dataset.true_entropy()
    except UnsupportedOperationError:
        pass
    return result


def run_bench_variance(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    """
    Compares uniform and importance sampled time proposals of the likelihood weighted objective on the
    same batches, writing one row per step and proposal with the running variance.
    """

    sde = create_sde(cfg.section('sde'))
    if args.checkpoint:
        model = load_checked_model(cfg, dataset, args.checkpoint)
    else:
        model = ScoreMlp(sde, dataset.dim, hidden_units=cfg['model']['hidden_units'],
                         num_layers=cfg['model']['num_layers'], num_frequencies=cfg['model']['num_frequencies'],
                         seed=cfg['seed'])
    eval_cfg = cfg['eval']
    data_rng = dataset.split_rng(Split.TRAIN)
    dequant_rng = make_rng(cfg['seed'], 'dequantize', Split.TRAIN.value)
    rngs = {p: make_rng(cfg['seed'], 'bench_variance', p.value) for p in Proposal}
    per_example = cfg['train']['per_example_times']
    scheme = WeightingScheme.likelihood()
    moments = {p: [0, 0., 0.] for p in Proposal}
    rows = []
    for step in range(1, eval_cfg['bench_steps'] + 1):
        batch = dataset.sample_batch(eval_cfg['bench_batch_size'], data_rng)
        batch = _continuous(cfg, dataset, batch, Split.TRAIN, dequant_rng)
        for proposal in Proposal:
            if proposal == Proposal.UNIFORM:
                estimate = mc_objective_uniform(model, sde, batch, rngs[proposal], scheme, per_example)
            else:
                estimate = mc_objective_importance(model, sde, batch, rngs[proposal], per_example)
            # Welford update of count, mean and sum of squared deviations
            count, mean, m2 = moments[proposal]
            count += 1
            delta = estimate.value - mean
            mean += delta / count
            m2 += delta * (estimate.value - mean)
            moments[proposal] = [count, mean, m2]
            running_variance = m2 / (count - 1) if count > 1 else 0.
            rows.append([step, scheme.name, proposal.value, repr(estimate.value), repr(running_variance)])
    out_path = cfg.output_path('bench_variance.csv')
    with open(out_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['step', 'scheme', 'proposal', 'loss', 'running_variance'])
        writer.writerows(rows)
    summary = {p.value: {'mean': moments[p][1], 'variance': moments[p][2] / max(moments[p][0] - 1, 1)}
               for p in Proposal}
    uniform_var = summary[Proposal.UNIFORM.value]['variance']
    importance_var = summary[Proposal.IMPORTANCE.value]['variance']
    return {'csv': out_path, 'steps': eval_cfg['bench_steps'], 'proposals': summary,
            'variance_ratio': importance_var / uniform_var if uniform_var > 0. else float('nan')}


def _discrete_data(cfg: ExperimentConfig, dataset: Dataset, split: Split, n: int) -> np.ndarray:
    if not dataset.is_discrete:
        raise ConfigValidationError('Dequantization requires dataset.kind=discrete_image.')
    return dataset.sample_split(split, n)


def run_dequant_train(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    train_data = _discrete_data(cfg, dataset, Split.TRAIN, cfg['dataset']['n_train'])
    score_model = load_checked_model(cfg, dataset, _checkpoint_path(cfg, args))
    hash_before = params_hash(score_model.get_flat_params()) if hasattr(score_model, 'get_flat_params') else None
    flow = DequantFlow(dataset.dim,
                       dataset.levels,
                       num_couplings=cfg['model']['num_couplings'],
                       hidden_units=cfg['model']['flow_hidden_units'],
                       seed=cfg['seed'])
    flow_path = args.flow or cfg.output_path(FLOW_DIR)
    trainer = Trainer.from_config(cfg.trainer_config())
    history = trainer.train_dequant_flow(flow, score_model, score_model.sde, train_data, flow_save_path=flow_path)
    hash_after = params_hash(score_model.get_flat_params()) if hash_before is not None else None
    return {'flow_checkpoint': flow_path, 'steps': len(history), 'final_loss': history[-1],
            'score_model_unchanged': hash_before == hash_after}


def run_dequant_eval(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    x = _discrete_data(cfg, dataset, Split.TEST, cfg['eval']['n_eval_points'])
    score_model = load_checked_model(cfg, dataset, _checkpoint_path(cfg, args))
    flow = DequantFlow.load(args.flow or cfg.output_path(FLOW_DIR))
    check_header(flow.header(), {'dim': dataset.dim, 'levels': dataset.levels})
    n_time_samples = cfg['eval']['n_time_samples']
    use_importance = cfg['eval']['use_importance']
    # same stream for both noise distributions
    variational = dequant_bound_samples(flow, score_model, score_model.sde, x, dataset.levels,
                                        make_rng(cfg['seed'], 'dequant_eval'), n_time_samples, use_importance)
    uniform = dequant_bound_samples(None, score_model, score_model.sde, x, dataset.levels,
                                    make_rng(cfg['seed'], 'dequant_eval'), n_time_samples, use_importance)
    return {'variational_nats': _summary(variational, cfg),
            'uniform_nats': _summary(uniform, cfg),
            'variational_bits_per_dim': bits_per_dim(-float(np.mean(variational)), dataset.dim),
            'uniform_bits_per_dim': bits_per_dim(-float(np.mean(uniform)), dataset.dim)}


def _read_per_point(cfg: ExperimentConfig, name: str) -> List[LikelihoodResult]:
    with open(cfg.output_path(name), 'r', encoding='utf-8') as f:
        return [LikelihoodResult.from_dict(values) for values in json.load(f)['per_point']]


def run_compare(cfg: ExperimentConfig, dataset: Dataset, args) -> Dict[str, Any]:
    """
    Checks the per-point results of the last bound run against those of the last nll run in output_dir.
    """

    bounds = _read_per_point(cfg, 'bound.json')
    ordering = bound_ordering(bounds, _read_per_point(cfg, 'nll.json'), n_std_errors=args.n_std_errors)
    return {'bound_kind': bounds[0].kind.value, 'n_std_errors': args.n_std_errors, **ordering.to_dict()}


COMMANDS = {'train': run_train,
            'sample': run_sample,
            'nll': run_nll,
            'bound': run_bound,
            'entropy': run_entropy,
            'bench-variance': run_bench_variance,
            'dequant-train': run_dequant_train,
            'dequant-eval': run_dequant_eval,
            'compare': run_compare}


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help='experiment config yaml')
    common.add_argument('--checkpoint', default=None, help='score model checkpoint, defaults to output_dir/'
                                                           + SCORE_MODEL_DIR)
    common.add_argument('--dump-trajectory', default=None, help='CSV file for the ODE trajectory')

    parser = argparse.ArgumentParser(prog='scoreflow', description='Likelihood training and evaluation of '
                                                                   'score-based diffusion models.')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True
    subparsers.add_parser('train', parents=[common], help='train and checkpoint a score model')
    sample = subparsers.add_parser('sample', parents=[common], help='write samples to CSV')
    sample.add_argument('--method', choices=('sde', 'ode'), default='sde')
    sample.add_argument('--n', type=int, default=1000)
    subparsers.add_parser('nll', parents=[common], help='exact ODE negative log-likelihoods')
    bound = subparsers.add_parser('bound', parents=[common], help='upper bounds on the negative log-likelihood')
    bound.add_argument('--form', choices=('sm', 'dsm'), default='dsm')
    bound.add_argument('--corrected', action='store_true', help='apply the Tweedie correction (dsm only)')
    entropy = subparsers.add_parser('entropy', parents=[common], help='differential entropy estimate')
    entropy.add_argument('--form', choices=('drift', 'divergence'), default='drift')
    subparsers.add_parser('bench-variance', parents=[common], help='time proposal variance comparison')
    for name in ('dequant-train', 'dequant-eval'):
        dequant = subparsers.add_parser(name, parents=[common], help='variational dequantization')
        dequant.add_argument('--flow', default=None, help='flow checkpoint, defaults to output_dir/' + FLOW_DIR)
    compare = subparsers.add_parser('compare', parents=[common], help='bound against ODE ordering of the last runs')
    compare.add_argument('--n-std-errors', type=float, default=3., help='Monte Carlo allowance of the bounds')
    return parser


def _create_components(cfg: ExperimentConfig) -> Dataset:
    """
    Builds the dataset and checks the SDE section, reporting invalid values as configuration errors.
    """

    try:
        create_sde(cfg.section('sde'))
        return create_dataset(cfg.dataset_config())
    except ValueError as e:
        raise ConfigValidationError(str(e)) from e


def _error_exit(e: Exception, exit_code: int) -> int:
    print(json.dumps({'error': e.__class__.__name__, 'message': str(e), 'exit_code': exit_code}), file=sys.stderr)
    return exit_code


def main(argv: List[str] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = create_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config)
        set_logging_level(cfg['logging_level'])
        os.makedirs(cfg['output_dir'], exist_ok=True)
        dataset = _create_components(cfg)
        result = COMMANDS[args.command](cfg, dataset, args)
        result['manifest'] = write_manifest(cfg, args.command, argv)
        _write_json(result, cfg.output_path('{}.json'.format(args.command.replace('-', '_'))))
        print(json.dumps(result, sort_keys=True))
    except (ConfigValidationError, CheckpointMismatchError, UnsupportedOperationError) as e:
        return _error_exit(e, EXIT_CONFIG_ERROR)
    except ValueError as e:
        return _error_exit(e, EXIT_INPUT_ERROR)
    except NumericalError as e:
        return _error_exit(e, EXIT_NUMERICAL_ERROR)
    except OSError as e:
        return _error_exit(e, EXIT_IO_ERROR)
    return EXIT_SUCCESS


if __name__ == '__main__':
    sys.exit(main())
