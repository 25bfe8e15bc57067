"""Desk-scale behavioral cloning on a pellet-collecting gridworld."""

from .env import ACTIONS, N_PELLETS, OBS_DIM, SIZE, STEP_LIMIT, GridWorld, expert_action
from .experiment import ExperimentResult, TrainConfig, run_isoflop_experiment
from .policy import BcPolicy, ExpertPolicy, UniformPolicy, param_count
from .train import (
    Dataset,
    TrainingDiverged,
    evaluate_return,
    generate_expert_dataset,
    train_bc,
    validation_loss,
)

__all__ = [
    "ACTIONS", "N_PELLETS", "OBS_DIM", "SIZE", "STEP_LIMIT", "GridWorld", "expert_action", "ExperimentResult", "TrainConfig", "run_isoflop_experiment",
    "BcPolicy", "ExpertPolicy", "UniformPolicy", "param_count", "Dataset", "TrainingDiverged",
    "evaluate_return", "generate_expert_dataset", "train_bc", "validation_loss",
]
