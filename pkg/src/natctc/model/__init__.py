from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .encoder import (
    EncoderConfig,
    ForwardCache,
    ModelError,
    ParamStore,
    backward,
    forward,
    init_params,
    remap_params,
)
from .optim import adam_update, average_checkpoints
from .train import (
    TrainConfig,
    evaluate,
    mlm_pretrain_step,
    nat_objective,
    nat_train_step,
    pretrain_mlm,
    train_nat,
)

__all__ = [
    "CheckpointError",
    "EncoderConfig",
    "ForwardCache",
    "ModelError",
    "ParamStore",
    "TrainConfig",
    "adam_update",
    "average_checkpoints",
    "backward",
    "evaluate",
    "forward",
    "init_params",
    "load_checkpoint",
    "mlm_pretrain_step",
    "nat_objective",
    "nat_train_step",
    "pretrain_mlm",
    "remap_params",
    "save_checkpoint",
    "train_nat",
]
