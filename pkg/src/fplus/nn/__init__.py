from .init import ForbiddenDistributionError, InitDistribution, init_array, init_sample
from .layers import (
    BatchNorm1d,
    Conv2d,
    Dense,
    Model,
    ModelSpec,
    batchnorm1d_forward,
    build_model,
    conv2d_forward,
    dense_forward,
    maxpool2d,
)
from .optim import (
    SGD,
    Adam,
    AdamConfig,
    Constant,
    ExponentialDecay,
    MultiStep,
    SGDConfig,
    StepDecay,
    lr_at,
    make_optimizer,
)
from .train import NumericDivergenceError, TrainConfig, TrajectoryLog, evaluate, train_model
