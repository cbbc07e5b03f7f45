from enum import Enum
from typing import Union

import numpy as np

from scoreflow.sde.sde import ArrayLike, Sde


class WeightingKind(str, Enum):
    ORIGINAL = 'original'
    LIKELIHOOD = 'likelihood'


class WeightingScheme:
    """
    Time weighting lambda(t) of the score matching objectives.

    The interpolation coefficient blends geometrically between the original weighting (0) and the
    likelihood weighting g(t)^2 (1).
    """

    def __init__(self, interpolation=1.) -> None:
        if not 0. <= interpolation <= 1.:
            raise ValueError('Weighting interpolation must lie in [0, 1], got {}.'.format(interpolation))
        self.interpolation = float(interpolation)

    @classmethod
    def original(cls) -> 'WeightingScheme':
        return cls(interpolation=0.)

    @classmethod
    def likelihood(cls) -> 'WeightingScheme':
        return cls(interpolation=1.)

    @classmethod
    def from_config(cls, value: Union[str, float]) -> 'WeightingScheme':
        """
        Accepts 'original', 'likelihood' or an interpolation coefficient.
        """

        if isinstance(value, str):
            kind = WeightingKind(value)
            return cls.original() if kind == WeightingKind.ORIGINAL else cls.likelihood()
        return cls(interpolation=float(value))

    @property
    def name(self) -> str:
        if self.interpolation == 0.:
            return WeightingKind.ORIGINAL.value
        if self.interpolation == 1.:
            return WeightingKind.LIKELIHOOD.value
        return 'interpolated_{:g}'.format(self.interpolation)

    def __call__(self, sde: Sde, t: ArrayLike) -> ArrayLike:
        return weighting(sde, self, t)

    def __repr__(self) -> str:
        return 'WeightingScheme({})'.format(self.name)


def weighting(sde: Sde, scheme: WeightingScheme, t: ArrayLike) -> ArrayLike:
    """
    Evaluates lambda(t) = g(t)^(2c) * lambda_original(t)^(1 - c) for interpolation coefficient c.
    """

    c = scheme.interpolation
    if c == 1.:
        return sde.diffusion(t) ** 2
    if c == 0.:
        return sde.original_weighting(t)
    return np.exp(c * 2. * np.log(sde.diffusion(t)) + (1. - c) * np.log(sde.original_weighting(t)))
