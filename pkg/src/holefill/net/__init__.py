"""Toy-scale boundary-to-surface network in plain numpy."""
from .model import (NetConfig, NetOutput, UVTranNet, cross_entropy, knot_mse,
                    knots_from_logits, pointnet_embed, surface_from_prediction,
                    token_project)
from .train import (TrainConfig, TrainingSet, load_checkpoint, read_trace,
                    save_checkpoint, train, write_trace)

__all__ = ["NetConfig", "NetOutput", "UVTranNet", "TrainConfig", "TrainingSet",
           "cross_entropy", "knot_mse", "knots_from_logits", "pointnet_embed",
           "token_project", "surface_from_prediction", "train", "save_checkpoint",
           "load_checkpoint", "write_trace", "read_trace"]
