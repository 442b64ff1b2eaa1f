"""Adversarial latent-space factorization for sparse spatio-temporal EEG classification."""

from .autodiff import Tape, Tensor, backward, no_grad
from .backend import BACKEND_NAME
from .data import EEGDataset, EEGTrial, SynthConfig, load_dataset, save_dataset, synthesize_sparse_dataset
from .nets import FactorModel, NetConfig, build_model
from .trainer import TrainConfig, train_cv

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "no_grad",
    "BACKEND_NAME",
    "EEGDataset",
    "EEGTrial",
    "SynthConfig",
    "load_dataset",
    "save_dataset",
    "synthesize_sparse_dataset",
    "FactorModel",
    "NetConfig",
    "build_model",
    "TrainConfig",
    "train_cv",
]

__version__ = "0.1.0"
