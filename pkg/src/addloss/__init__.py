"""Angular Distance Distribution (ADD) loss, a numpy MLP trainer and geometry metrics."""

from .geometry import (Batch, DistanceStats, LossWeights, PairPartition, add_loss_hard,
                       add_loss_soft, cosine_distance, l_mu_soft, moments, normalize,
                       partition_pairs)
from .gradients import add_loss_hard_grad, add_loss_soft_grad, finite_difference_grad
from .metrics import GeometryReport, geometry_report

__all__ = [
    "Batch", "DistanceStats", "LossWeights", "PairPartition", "add_loss_hard",
    "add_loss_soft", "cosine_distance", "l_mu_soft", "moments", "normalize",
    "partition_pairs", "add_loss_hard_grad", "add_loss_soft_grad",
    "finite_difference_grad", "GeometryReport", "geometry_report",
]

__version__ = "0.1.0"
