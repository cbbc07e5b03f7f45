import abc
import csv
import re
from abc import abstractmethod
from enum import Enum
from typing import Any, Dict, Sequence

import numpy as np
from scipy import stats
from scipy.ndimage import gaussian_filter
from scipy.special import logsumexp, ndtr

from scoreflow.errors import UnsupportedOperationError
from scoreflow.evaluation.likelihood_result import Summary
from scoreflow.utils.rng import make_rng


_INTEGER = re.compile(r'[+-]?\d+')


class DatasetKind(str, Enum):
    GAUSSIAN = 'gaussian'
    MIXTURE = 'mixture'
    DISCRETE_IMAGE = 'discrete_image'


class Split(str, Enum):
    TRAIN = 'train'
    TEST = 'test'


class Dataset(abc.ABC):
    """
    Synthetic data distribution with reproducible train and test streams.

    Batches of a split are drawn from make_rng(seed, 'data', split), so the streams of different
    splits never overlap and identical seeds give bit-identical batches.
    """

    kind: DatasetKind = None

    def __init__(self, dim: int, seed=0) -> None:
        self.dim = int(dim)
        self.seed = seed

    @property
    def levels(self):
        return None

    @property
    def is_discrete(self) -> bool:
        return self.levels is not None

    @abstractmethod
    def sample_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        pass

    def split_rng(self, split: Split) -> np.random.Generator:
        return make_rng(self.seed, 'data', Split(split).value)

    def sample_split(self, split: Split, n: int) -> np.ndarray:
        return self.sample_batch(n, self.split_rng(split))

    def true_logpdf(self, x: np.ndarray) -> np.ndarray:
        raise UnsupportedOperationError('{} has no density.'.format(self.__class__.__name__))

    def true_entropy(self) -> float:
        raise UnsupportedOperationError('{} has no differential entropy.'.format(self.__class__.__name__))


class GaussianDataset(Dataset):

    kind = DatasetKind.GAUSSIAN

    def __init__(self, mu0: Sequence[float], var0: Sequence[float] = 1., seed=0) -> None:
        mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
        var0 = np.broadcast_to(np.asarray(var0, dtype=np.float64), mu0.shape).copy()
        if np.any(var0 <= 0.):
            raise ValueError('Gaussian variances must be strictly positive, got {}.'.format(var0))
        super().__init__(mu0.shape[0], seed)
        self.mu0 = mu0
        self.var0 = var0

    def sample_batch(self, n, rng):
        return self.mu0 + np.sqrt(self.var0) * rng.standard_normal((n, self.dim))

    def true_logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * np.sum(np.log(2. * np.pi * self.var0) + (x - self.mu0) ** 2 / self.var0, axis=-1)

    def true_entropy(self):
        return float(0.5 * np.sum(np.log(2. * np.pi * np.e * self.var0)))


class GaussianMixture(Dataset):
    """
    Mixture of diagonal Gaussians, by default two unit-variance components at +-(2, 2) with equal weights.
    """

    kind = DatasetKind.MIXTURE

    def __init__(self,
                 weights: Sequence[float] = (0.5, 0.5),
                 means: Sequence[Sequence[float]] = ((2., 2.), (-2., -2.)),
                 variances: Any = 1.,
                 seed=0) -> None:
        weights = np.asarray(weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        if weights.shape != (means.shape[0],):
            raise ValueError('Got {} weights for {} components.'.format(weights.shape[0], means.shape[0]))
        if np.any(weights < 0.) or not np.isclose(np.sum(weights), 1., rtol=0., atol=1e-12):
            raise ValueError('Mixture weights must be non-negative and sum to 1, got {}.'.format(weights))
        variances = np.asarray(variances, dtype=np.float64)
        if variances.ndim == 1 and variances.shape[0] == means.shape[0]:
            variances = variances[:, None]
        variances = np.broadcast_to(variances, means.shape).copy()
        if np.any(variances <= 0.):
            raise ValueError('Mixture variances must be strictly positive, got {}.'.format(variances))
        super().__init__(means.shape[1], seed)
        self.weights = weights
        self.means = means
        self.variances = variances

    def sample_batch(self, n, rng):
        components = rng.choice(self.weights.shape[0], size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[components] + np.sqrt(self.variances[components]) * noise

    def component_logpdfs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None, :]
        return -0.5 * np.sum(np.log(2. * np.pi * self.variances) + (x - self.means) ** 2 / self.variances, axis=-1)

    def true_logpdf(self, x):
        return logsumexp(self.component_logpdfs(x) + np.log(self.weights), axis=-1)

    def monte_carlo_entropy(self, n_samples=10 ** 7, rng: np.random.Generator = None, chunk_size=10 ** 6,
                            confidence=0.95) -> Summary:
        """
        Monte Carlo estimate of -E[log p(x)] with a Student-t confidence interval, drawn in chunks.
        """

        rng = rng or make_rng(self.seed, 'entropy')
        total, total_sq, count = 0., 0., 0
        while count < n_samples:
            size = min(chunk_size, n_samples - count)
            values = -self.true_logpdf(self.sample_batch(size, rng))
            total += float(np.sum(values))
            total_sq += float(np.sum(values ** 2))
            count += size
        mean = total / count
        variance = (total_sq - count * mean ** 2) / (count - 1)
        return summarize_moments(mean, variance, count, confidence)

    def true_entropy(self):
        return self.monte_carlo_entropy().mean


def summarize_moments(mean: float, variance: float, n: int, confidence=0.95) -> Summary:
    half_width = stats.t.ppf(0.5 + confidence / 2., df=n - 1) * np.sqrt(max(variance, 0.) / n)
    return Summary(float(mean), float(half_width), int(n))


class DiscreteImage(Dataset):
    """
    Small integer images with L levels, obtained by quantizing a smooth Gaussian random field.

    Each image is a fixed template, generated from generator_seed, plus fresh smoothed noise. The field
    has unit marginal variance and is quantized by equal-mass bins of the standard normal.
    """

    kind = DatasetKind.DISCRETE_IMAGE

    def __init__(self, side=4, levels=8, generator_seed=0, smoothing=1., template_weight=0.8, seed=0) -> None:
        if side < 1 or levels < 2:
            raise ValueError('Expected side >= 1 and levels >= 2, got {} and {}.'.format(side, levels))
        if not 0. <= template_weight <= 1.:
            raise ValueError('Template weight must lie in [0, 1], got {}.'.format(template_weight))
        super().__init__(side * side, seed)
        self.side = side
        self._levels = levels
        self.generator_seed = generator_seed
        self.smoothing = smoothing
        self.template_weight = template_weight
        impulse = np.zeros((side, side))
        impulse[0, 0] = 1.
        self._field_std = float(np.sqrt(np.sum(gaussian_filter(impulse, smoothing, mode='wrap') ** 2)))
        self.template = self._smooth_field(make_rng(generator_seed, 'template'), 1)[0]

    @property
    def levels(self):
        return self._levels

    def _smooth_field(self, rng: np.random.Generator, n: int) -> np.ndarray:
        white = rng.standard_normal((n, self.side, self.side))
        smooth = gaussian_filter(white, sigma=(0., self.smoothing, self.smoothing), mode='wrap')
        return smooth.reshape(n, self.dim) / self._field_std

    def sample_batch(self, n, rng):
        w = self.template_weight
        field = w * self.template + np.sqrt(1. - w ** 2) * self._smooth_field(rng, n)
        return np.minimum(np.floor(ndtr(field) * self._levels), self._levels - 1).astype(np.int64)


def create_dataset(config: Dict[str, Any]) -> Dataset:
    """
    Creates a dataset from a config section with key kind and the parameters of that kind.
    """

    kind = DatasetKind(config['kind'])
    seed = config.get('seed', 0)
    if kind == DatasetKind.GAUSSIAN:
        return GaussianDataset(config.get('mu0', [0., 0.]), config.get('var0', 1.), seed=seed)
    if kind == DatasetKind.MIXTURE:
        params = {key: config[key] for key in ('weights', 'means', 'variances') if config.get(key) is not None}
        return GaussianMixture(**params, seed=seed)
    params = {key: config[key] for key in ('side', 'levels', 'generator_seed', 'smoothing', 'template_weight')
              if config.get(key) is not None}
    return DiscreteImage(**params, seed=seed)


def dump_csv(samples: np.ndarray, out_path: str) -> None:
    samples = np.atleast_2d(samples)
    with open(out_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['x_{}'.format(d) for d in range(samples.shape[1])])
        for row in samples:
            writer.writerow([repr(v) for v in row.tolist()])


def load_csv(in_path: str) -> np.ndarray:
    """
    Loads samples written by dump_csv, integer valued files come back as int64.
    """

    with open(in_path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        next(reader)
        rows = [row for row in reader]
    if all(_INTEGER.fullmatch(v.strip()) for row in rows for v in row):
        return np.asarray(rows, dtype=np.int64)
    return np.asarray(rows, dtype=np.float64)
