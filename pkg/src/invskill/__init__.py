"""Joint forward/inverse skill learning from unorganized demonstrations."""

from .assign import Assignment, CostMatrix, build_cost_matrix, pair_demonstrations, solve_assignment
from .core import (
    AuxiliaryDataset,
    Demonstration,
    GaussianPrediction,
    PairedDataset,
    Role,
    Trajectory,
    normalize_time,
)
from .model import JointModel, ModelDims, generate_trajectory
from .storage import load_demos, load_model, save_demos, save_model
from .train import TrainConfig, train

__version__ = "0.1.0"
