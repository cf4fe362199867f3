from hsdacs.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from hsdacs.training.loss import label_smoothed_ce
from hsdacs.training.optimizer import Adam, clip_grad_norm
from hsdacs.training.schedule import noam_lr
from hsdacs.training.trainer import TrainConfig, Trainer, TrainReport, loss_log_path, model_from_checkpoint, train

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "label_smoothed_ce",
    "Adam",
    "clip_grad_norm",
    "noam_lr",
    "TrainConfig",
    "Trainer",
    "TrainReport",
    "loss_log_path",
    "model_from_checkpoint",
    "train",
]
