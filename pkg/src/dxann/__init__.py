"""Flow-based binary classification with per-feature explanations.

An invertible stack of affine coupling blocks embeds inputs in a latent
space holding one unit-covariance Gaussian per class. Predictions pick the
likelier Gaussian and the Explainability Contribution Score (ECS) of each
feature is its latent distance from the predicted class mean.
"""
from .classifier import (
    ECSMap,
    LatentHeads,
    Prediction,
    dxann_loss,
    ecs_batch,
    ecs_normalize,
    ecs_raw,
    gaussian_logpdf,
    localization,
    predict,
    predict_batch,
    realnvp_loss,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    Dataset,
    Sample,
    gen_blob_images,
    gen_two_moons,
    load_dataset,
    preprocess,
    save_dataset,
    split,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    DxannError,
    FormatError,
)
from .flow import (
    AffineCouplingBlock,
    FlowConfig,
    FlowModel,
    Mask,
    couple_forward,
    couple_inverse,
    flow_forward,
    flow_inverse,
    make_flow,
    make_mask,
)
from .train import EvalResult, MetricsLog, OptimizerState, TrainConfig, adam_step, evaluate, train

__version__ = "0.1.0"
