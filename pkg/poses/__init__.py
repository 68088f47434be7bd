from poses.loss import LossReport, LossWeights, evaluate, is_valid, overlap, set_is_valid
from poses.optimizer import OptimizerConfig, PoseSet, batch_optimize, optimize, stochastic_oracle

__all__ = [
    "LossReport",
    "LossWeights",
    "evaluate",
    "is_valid",
    "overlap",
    "set_is_valid",
    "OptimizerConfig",
    "PoseSet",
    "batch_optimize",
    "optimize",
    "stochastic_oracle",
]
