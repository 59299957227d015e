"""Minimal self-contained neural engine: dense layers with exact reverse-mode
gradients, Chamfer/MSE losses, a max-pool point encoder, adaptive-moment
updates, and a deterministic training loop with resume support."""

from .mlp import (ACTIVATIONS, DenseLayer, MlpModel, mlp_backward,
                  mlp_forward, mlp_init)
from .losses import chamfer_loss_grad, mse_loss_grad
from .optim import Adam
from .pointnet import PointEncoder, encode_backward, encode_points
from .train import TrainingDiverged, TrainResult, TrainState, train
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import finite_difference_grads, max_relative_error

__all__ = [
    "ACTIVATIONS", "DenseLayer", "MlpModel", "mlp_init", "mlp_forward",
    "mlp_backward", "mse_loss_grad", "chamfer_loss_grad", "Adam",
    "PointEncoder", "encode_points", "encode_backward", "train",
    "TrainState", "TrainResult", "TrainingDiverged", "save_checkpoint",
    "load_checkpoint", "finite_difference_grads", "max_relative_error",
]
