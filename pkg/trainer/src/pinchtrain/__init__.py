"""Unsupervised trainer for the pinching-antenna inference network.

The trainer is deliberately independent of the inference package: it consumes
scenario JSON files and emits weight documents in the portable format, and
reimplements the documented forward pass in torch so gradients flow through
positions, channels and beamformers.
"""

from .scenario import Scenario, load_scenario, sample_placements
from .model import GnnModel, MultiplierNet, export_weights
from .train import TrainConfig, lagrangian_loss, train

__all__ = ["Scenario", "load_scenario", "sample_placements", "GnnModel",
           "MultiplierNet", "export_weights", "TrainConfig",
           "lagrangian_loss", "train"]
