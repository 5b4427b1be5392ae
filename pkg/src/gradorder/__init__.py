"""Shuffling SGD with gradient-norm example orderings, per-epoch distance
bounds, and a small experiment harness."""

from .bounds import (
    BoundInputs,
    MinimizerError,
    bound_thm1,
    bound_thm2,
    bound_thm3,
    bound_thm4,
    epsilon_k,
    find_minimizer,
    pairing_sum,
)
from .core import ScheduleKind, StepSchedule, step_size
from .data import CSVFormatError, Dataset, TargetKind, gen_synthetic, load_csv, minmax_scale, save_csv
from .harness import ExperimentConfig, compare, load_config, run_bound_check, run_experiment
from .losses import GradCapTracker, LinRegQuarticLoss, SyntheticAnchorLoss, grad_norms_at, loss_grad, loss_value
from .mlp import DenseNet, SoftmaxClassifierLoss, forward_logits, sample_loss_and_grad
from .optimizer import (
    Algorithm,
    DivergenceError,
    TrainConfig,
    TraceRecord,
    TrainResult,
    train,
    train_data_selection,
    train_full_ordering,
    train_sort_before_minibatch,
    train_sort_within_minibatch,
)
from .ordering import LogitScore, OrderKind, OrderingStrategy, make_permutation

__version__ = "0.1.0"
