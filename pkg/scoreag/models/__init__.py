from scoreag.models.analytic import PointMassScore, UnitGaussianScore
from scoreag.models.classifier import Classification, Classifier, classify
from scoreag.models.score_model import UNCONDITIONAL, ScoreFunction, ScoreModel

__all__ = [
    "Classification",
    "Classifier",
    "PointMassScore",
    "ScoreFunction",
    "ScoreModel",
    "UNCONDITIONAL",
    "UnitGaussianScore",
    "classify",
]
