"""Minimal differentiable CNN engine with full trace capture."""

from .layers import AvgPool, Conv2d, Dense, Flatten, GlobalAvgPool, MaxPool, ReLU
from .network import (
    BackwardTrace,
    ForwardTrace,
    Network,
    backward,
    forward,
    grad_check,
    instrumentation,
    load_network,
    network_from_json,
    network_to_json,
    save_network,
    softmax,
)

__all__ = [
    "AvgPool",
    "BackwardTrace",
    "Conv2d",
    "Dense",
    "Flatten",
    "ForwardTrace",
    "GlobalAvgPool",
    "MaxPool",
    "Network",
    "ReLU",
    "backward",
    "forward",
    "grad_check",
    "instrumentation",
    "load_network",
    "network_from_json",
    "network_to_json",
    "save_network",
    "softmax",
]
