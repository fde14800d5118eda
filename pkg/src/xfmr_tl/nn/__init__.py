from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .model import Architecture, ArchitectureMismatch, SynthesisModel, loss, loss_grad
from .optim import Adam, lr_schedule
from .train import TrainConfig, evaluate, fast_config, train

__all__ = [
    "Adam", "Architecture", "ArchitectureMismatch", "ModelCheckpoint", "SynthesisModel",
    "TrainConfig", "evaluate", "fast_config", "load_checkpoint", "loss", "loss_grad",
    "lr_schedule", "save_checkpoint", "train",
]
