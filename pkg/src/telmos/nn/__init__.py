from .model import (
    DEFAULT_ARCH,
    ModelArch,
    ModelParams,
    forward_batch,
    forward_shapes,
    init_params,
    model_forward,
    mse_loss_and_grads,
    predict_batch,
    tensor_specs,
)
from .optim import OptimizerState, adam_step, adam_update, init_optimizer
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint
from .train import TrainConfig, TrainLog, train_model, train_step

__all__ = [
    "DEFAULT_ARCH",
    "ModelArch",
    "ModelParams",
    "OptimizerState",
    "TrainConfig",
    "TrainLog",
    "adam_step",
    "adam_update",
    "forward_batch",
    "forward_shapes",
    "init_optimizer",
    "init_params",
    "load_checkpoint",
    "model_forward",
    "mse_loss_and_grads",
    "predict_batch",
    "read_checkpoint",
    "save_checkpoint",
    "tensor_specs",
    "train_model",
    "train_step",
    "write_checkpoint",
]
