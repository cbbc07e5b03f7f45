import copy
import hashlib
import json
import os
from typing import Any, Dict

import yaml

from scoreflow.errors import ConfigValidationError

DEFAULTS = {
    'output_dir': 'scoreflow_output',
    'seed': 0,
    'logging_level': 'info',
    'sde': {
        'kind': 'vp',
        'beta_min': 0.1,
        'beta_max': 20.,
        'sigma_min': 0.01,
        'sigma_max': 50.,
        'T': 1.,
        'epsilon': None,
    },
    'dataset': {
        'kind': 'mixture',
        'mu0': None,
        'var0': None,
        'weights': None,
        'means': None,
        'variances': None,
        'side': None,
        'levels': None,
        'generator_seed': None,
        'smoothing': None,
        'template_weight': None,
        'n_train': 10000,
        'n_test': 1000,
    },
    'model': {
        'kind': 'mlp',
        'hidden_units': 64,
        'num_layers': 3,
        'num_frequencies': 8,
        'embedding_scale': 1.,
        'scale_by_std': True,
        'num_couplings': 3,
        'flow_hidden_units': 64,
    },
    'train': {
        'steps': 2000,
        'batch_size': 128,
        'learning_rate': 1e-3,
        'beta_1': 0.9,
        'beta_2': 0.999,
        'epsilon': 1e-8,
        'clip_norm': 1.,
        'eval_every': 500,
        'scheme': 'likelihood',
        'proposal': 'importance',
        'per_example_times': False,
        'shuffle_buffer_size': 10000,
        'dequant_steps': None,
        'dequant_time_samples': 4,
        'steps_to_log': 100,
    },
    'solver': {
        'rtol': 1e-5,
        'atol': 1e-5,
        'max_steps': 10000,
        'initial_step': None,
        'max_step': None,
        'divergence': 'auto',
        'n_probes': 1,
        'probe': 'rademacher',
        'sde_steps': 1000,
    },
    'eval': {
        'n_time_samples': 1000,
        'use_importance': True,
        'n_eval_points': 100,
        'n_correction_draws': 1,
        'n_time_nodes': 101,
        'confidence': 0.95,
        'bench_steps': 1000,
        'bench_batch_size': 128,
    },
}


def _merge(defaults: Dict[str, Any], values: Dict[str, Any], prefix: str) -> Dict[str, Any]:
    if not isinstance(values, dict):
        raise ConfigValidationError('{} must be a mapping, got {!r}.'.format(prefix.rstrip('.') or 'config', values))
    merged = copy.deepcopy(defaults)
    for key, value in values.items():
        dotted = prefix + str(key)
        if key not in defaults:
            raise ConfigValidationError('Unknown config key {}.'.format(dotted))
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value or {}, dotted + '.')
        else:
            merged[key] = value
    return merged


def _require_positive(cfg: Dict[str, Any], section: str, *keys: str) -> None:
    for key in keys:
        value = cfg[section][key]
        if value is not None and (not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0):
            raise ConfigValidationError('Config key {}.{} must be positive, got {!r}.'.format(section, key, value))


class ExperimentConfig:
    """
    Validated experiment configuration with the sections sde, dataset, model, train, solver and eval.
    Missing keys take the defaults above, unknown keys are rejected.
    """

    def __init__(self, values: Dict[str, Any] = None) -> None:
        cfg = _merge(DEFAULTS, values or {}, '')
        self._validate(cfg)
        self.values = cfg

    @classmethod
    def from_file(cls, file_path: str) -> 'ExperimentConfig':
        with open(file_path, 'r', encoding='utf-8') as f:
            try:
                values = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigValidationError('Config file {} is not valid yaml: {}'.format(file_path, e))
        return cls(values)

    @staticmethod
    def _validate(cfg: Dict[str, Any]) -> None:
        choices = {('sde', 'kind'): ('ve', 'vp', 'subvp'),
                   ('dataset', 'kind'): ('gaussian', 'mixture', 'discrete_image'),
                   ('model', 'kind'): ('mlp', 'analytic'),
                   ('train', 'proposal'): ('uniform', 'importance'),
                   ('solver', 'divergence'): ('auto', 'exact', 'hutchinson'),
                   ('solver', 'probe'): ('rademacher', 'gaussian')}
        for (section, key), allowed in choices.items():
            if cfg[section][key] not in allowed:
                raise ConfigValidationError('Config key {}.{} must be one of {}, got {!r}.'.format(
                    section, key, ', '.join(allowed), cfg[section][key]))
        scheme = cfg['train']['scheme']
        if scheme not in ('original', 'likelihood') and not (isinstance(scheme, (int, float)) and 0 <= scheme <= 1):
            raise ConfigValidationError('Config key train.scheme must be original, likelihood or a number in [0, 1], '
                                        'got {!r}.'.format(scheme))
        if cfg['train']['proposal'] == 'importance' and scheme != 'likelihood' and scheme != 1:
            raise ConfigValidationError('Config key train.proposal=importance requires train.scheme=likelihood.')
        if cfg['logging_level'] not in ('debug', 'info', 'error'):
            raise ConfigValidationError('Config key logging_level must be debug, info or error, got {!r}.'.format(
                cfg['logging_level']))
        _require_positive(cfg, 'sde', 'T', 'epsilon', 'sigma_min', 'sigma_max')
        _require_positive(cfg, 'dataset', 'n_train', 'n_test')
        _require_positive(cfg, 'model', 'hidden_units', 'num_layers', 'num_frequencies', 'num_couplings',
                          'flow_hidden_units')
        _require_positive(cfg, 'train', 'steps', 'batch_size', 'learning_rate', 'clip_norm', 'eval_every',
                          'dequant_steps', 'dequant_time_samples', 'steps_to_log')
        _require_positive(cfg, 'solver', 'rtol', 'atol', 'max_steps', 'n_probes', 'sde_steps')
        _require_positive(cfg, 'eval', 'n_time_samples', 'n_eval_points', 'n_correction_draws', 'bench_steps',
                          'bench_batch_size')
        if cfg['sde']['epsilon'] is not None and cfg['sde']['epsilon'] >= cfg['sde']['T']:
            raise ConfigValidationError('Config key sde.epsilon must be smaller than sde.T.')
        if cfg['eval']['n_time_nodes'] % 2 == 0 or cfg['eval']['n_time_nodes'] < 3:
            raise ConfigValidationError('Config key eval.n_time_nodes must be odd and at least 3.')

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def section(self, name: str) -> Dict[str, Any]:
        """
        Returns a copy of a section without the keys left at None.
        """

        return {k: v for k, v in self.values[name].items() if v is not None}

    def dataset_config(self) -> Dict[str, Any]:
        dataset = self.section('dataset')
        dataset.pop('n_train')
        dataset.pop('n_test')
        return {'seed': self.values['seed'], **dataset}

    def trainer_config(self) -> Dict[str, Any]:
        return {'seed': self.values['seed'], 'logging_level': self.values['logging_level'], **self.section('train')}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.values, default_flow_style=False, sort_keys=True)

    def hash(self) -> str:
        canonical = json.dumps(self.values, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def output_path(self, *parts: str) -> str:
        return os.path.join(self.values['output_dir'], *parts)
