import os

import yaml

from scoreflow.errors import CheckpointMismatchError
from scoreflow.model.analytic_gaussian import AnalyticGaussian, ANALYTIC_GAUSSIAN_TAG
from scoreflow.model.checkpoint import HEADER_FILE
from scoreflow.model.score_mlp import ScoreMlp, SCORE_MLP_TAG
from scoreflow.model.score_model import ScoreModel


def load_score_model(in_path: str) -> ScoreModel:
    """
    Loads any score model checkpoint, dispatching on the tag stored in its header.
    """

    with open(os.path.join(in_path, HEADER_FILE), 'r', encoding='utf-8') as f:
        tag = yaml.safe_load(f).get('tag')
    if tag == SCORE_MLP_TAG:
        return ScoreMlp.load(in_path)
    if tag == ANALYTIC_GAUSSIAN_TAG:
        return AnalyticGaussian.load(in_path)
    raise CheckpointMismatchError('{} does not hold a score model checkpoint, found tag {}.'.format(in_path, tag))
