from .baselines import levinson_durbin, moving_average_predict, wiener_predict
from .losses import pinball_grad, pinball_loss
from .network import (attention_maps, backward, count_params, forward,
                      forward_flops, init_params, load_checkpoint,
                      param_names, predict, save_checkpoint)
from .optim import Adam, DropoutMasks, tagged_rng
from .train import TrainingDivergedError, TrainResult, batch_schedule, train

__all__ = [
    "forward", "backward", "predict", "init_params", "param_names",
    "attention_maps", "forward_flops", "count_params",
    "save_checkpoint", "load_checkpoint",
    "pinball_loss", "pinball_grad",
    "Adam", "DropoutMasks", "tagged_rng",
    "train", "TrainResult", "TrainingDivergedError", "batch_schedule",
    "moving_average_predict", "wiener_predict", "levinson_durbin",
]
