from .analytic_gaussian import AnalyticGaussian
from .loader import load_score_model
from .score_mlp import ScoreMlp
from .score_model import ScoreModel
