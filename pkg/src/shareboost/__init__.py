"""Sparse multiclass linear classifiers with shared features.

Greedy fully corrective selection of weight-matrix columns under the
multiclass soft-max loss, together with non-linear feature maps, baseline
trainers, synthetic datasets and a command-line interface.
"""

from .exceptions import InputError, NumericalError
from .model import (
    Dataset,
    LabeledExample,
    Regularizer,
    WeightModel,
    column_scores,
    gradient,
    loss_and_gradient,
    loss_avg,
    loss_example,
    mixed_norm,
    predict,
    rho,
    zero_one_error,
)
from .solver import SmoothObjective, SolverConfig, SolverResult, minimize_smooth
from .trainer import (
    TrainConfig,
    TrainTrace,
    corrective_solve,
    progress_check,
    select_feature,
    select_group,
    shareboost_train,
    shareboost_train_stumps,
)

__version__ = "0.1.0"
