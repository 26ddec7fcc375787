"""Desk-scale ViT training lab for MaskMix image mixing with progressive attention labelling."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward
from .config import TrainConfig, load_config
from .maskmix import MixMask, downsample_mask, generate_grid_mask, mix_images, sample_tau
from .labeling import (AlphaStrategy, LambdaWeights, alpha_for, blend_lambda, lambda_attn,
                       mix_labels, progressive_factor, smooth_labels)
from .vit import ViTConfig, ViTParams, forward, init_params
from .training import evaluate, mixpro_train_step, train_loop

__all__ = [
    "Tensor", "backward", "TrainConfig", "load_config", "MixMask", "downsample_mask",
    "generate_grid_mask", "mix_images", "sample_tau", "AlphaStrategy", "LambdaWeights",
    "alpha_for", "blend_lambda", "lambda_attn", "mix_labels", "progressive_factor",
    "smooth_labels", "ViTConfig", "ViTParams", "forward", "init_params", "evaluate",
    "mixpro_train_step", "train_loop",
]
