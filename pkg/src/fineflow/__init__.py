"""Learning fine-time-scale flow maps from coarsely observed trajectories."""
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import ObservationDataset, load_dataset, save_dataset
from .estimator import FlowMapRegressor, PdeFlowMapRegressor
from .evaluate import rollout
from .net import MlpParams, compose, init_mlp, resnet_step
from .pde_net import PdeFlowMapModel, init_pde_model
from .presets import PRESETS, get_preset
from .training import TrainConfig, recurrent_loss, train

__version__ = "0.1.0"

__all__ = [
    "FlowMapRegressor",
    "MlpParams",
    "ObservationDataset",
    "PRESETS",
    "PdeFlowMapModel",
    "PdeFlowMapRegressor",
    "TrainConfig",
    "compose",
    "get_preset",
    "init_mlp",
    "init_pde_model",
    "load_checkpoint",
    "load_dataset",
    "recurrent_loss",
    "resnet_step",
    "rollout",
    "save_checkpoint",
    "save_dataset",
    "train",
]
