from .layers import (
    Concat,
    Conv2D,
    Dense,
    Flatten,
    MeanPool,
    MultiHeadAttention,
    PointwiseSeparableConv,
    PositionalEmbedding,
    ReLU,
    ResidualBlock,
)
from .loss import softmax, softmax_cross_entropy
from .optim import Adam, TrainConfig, adam_step
from .gradcheck import grad_check

__all__ = [
    "Concat", "Conv2D", "Dense", "Flatten", "MeanPool", "MultiHeadAttention",
    "PointwiseSeparableConv", "PositionalEmbedding", "ReLU", "ResidualBlock",
    "softmax", "softmax_cross_entropy", "Adam", "TrainConfig", "adam_step",
    "grad_check",
]
