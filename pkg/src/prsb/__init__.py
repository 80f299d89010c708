"""Feature-subset ensembles with learned per-feature selection probabilities."""

from .data import CLASSIFICATION, REGRESSION, Dataset, TrainConfig, normalize
from .learners import Ensemble, LearnerSpec
from .trainer import TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "CLASSIFICATION",
    "REGRESSION",
    "Dataset",
    "Ensemble",
    "LearnerSpec",
    "TrainConfig",
    "TrainReport",
    "normalize",
    "train",
    "__version__",
]
