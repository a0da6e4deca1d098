"""Implicit channel-charting localization with a UAV-borne receiver.

A UAV flies a fixed set of waypoints and measures the channel gain to every
ground node. A symmetric CNN maps the CSI of two nodes to their distance,
and multilateration against anchors of known position turns those
distances into positions. Nearest-neighbour (DFPL) and direct CNN
regression (NFPL) fingerprinting serve as baselines.
"""
from .errors import DegenerateGeometry, ICCLError, InvalidArgument, PlacementFailure, TrainingDiverged
from .multilateration import locate, localize_all
from .network import load_checkpoint, save_checkpoint
from .propagation import ChannelModel, CsiDataset, gain_matrix, generate_dataset, read_dataset, write_dataset
from .regressor import predict_distance, predict_pairs, pretrain_then_finetune
from .scene import Building, NodeSet, Scene, Trajectory, build_circular_trajectory, generate_random_scene
from .train import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Building", "ChannelModel", "CsiDataset", "DegenerateGeometry", "ICCLError", "InvalidArgument",
    "NodeSet", "PlacementFailure", "Scene", "TrainConfig", "Trajectory", "TrainingDiverged",
    "build_circular_trajectory", "gain_matrix", "generate_dataset", "generate_random_scene",
    "load_checkpoint", "localize_all", "locate", "predict_distance", "predict_pairs",
    "pretrain_then_finetune", "read_dataset", "save_checkpoint", "write_dataset",
]
