"""Pixel-aligned implicit field: encoders, query MLP, training, checkpoints."""

from .layers import ParamSet, Tensor, backward
from .encoder import EncoderConfig, build_encoder_params, encode, encode_tensor, feature_map_shape, min_input_dim
from .mlp import build_mlp_params, mlp_forward
from .model import (
    FieldConfig,
    PixelAlignedField,
    build_field,
    field_forward,
    gather_features,
    geometry_for_views,
    init_weights,
    loss_terms,
    query_points,
)
from .train import TrainConfig, grad_check, train
from .checkpoint import load_weights, peek_weights_config, save_weights

__all__ = [
    "EncoderConfig",
    "FieldConfig",
    "ParamSet",
    "PixelAlignedField",
    "Tensor",
    "TrainConfig",
    "backward",
    "build_encoder_params",
    "build_field",
    "build_mlp_params",
    "encode",
    "encode_tensor",
    "feature_map_shape",
    "field_forward",
    "gather_features",
    "geometry_for_views",
    "grad_check",
    "init_weights",
    "load_weights",
    "loss_terms",
    "min_input_dim",
    "mlp_forward",
    "peek_weights_config",
    "query_points",
    "save_weights",
    "train",
]
