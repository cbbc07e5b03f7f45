from .sde import Sde, SdeKind, SubVpSde, TransitionParams, VeSde, VpSde, create_sde
from .weighting import WeightingScheme, weighting
