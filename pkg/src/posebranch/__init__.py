"""Joint object category and pose estimation networks, built on numpy.

Subpackages and modules:

* ``posebranch.nn``: layers, losses, SGD and checkpoints
* ``posebranch.topology``: the base network and its PM, CPM, LBM and EBM variants
* ``posebranch.pose``: pose bins and angular metrics
* ``posebranch.synth``: the synthetic multi-view dataset
* ``posebranch.probes``: per-layer probes and view-manifold measurements
* ``posebranch.harness``: training, evaluation and experiment drivers
"""
from .pose import PoseBinning, aaai_accuracy, abs_angular_error
from .topology import LabelSpace, build_topology, count_parameters, instantiate

__all__ = [
    "LabelSpace",
    "PoseBinning",
    "aaai_accuracy",
    "abs_angular_error",
    "build_topology",
    "count_parameters",
    "instantiate",
]
__version__ = "0.1.0"
