"""Point predictor head: concatenated per-view features + world coordinate
in, (value, normal, edge) out.

Trunk is a tanh MLP; three linear heads branch off the last hidden layer.
Value is squashed to [0, 1] with a sigmoid, the normal head is scaled to
unit length, edge stays raw (targets already live in [0, 1]).
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, RangeError
from .layers import (
    ParamSet,
    Tensor,
    add,
    linear_init,
    matmul,
    mul,
    pow_const,
    reduce_sum,
    reshape,
    sigmoid,
    tanh,
)

_NORM_EPS = 1e-12


def build_mlp_params(
    n_features: int,
    hidden: tuple[int, ...],
    rng: np.random.Generator,
    prefix: str = "mlp",
    dtype=np.float32,
) -> ParamSet:
    """Parameters in declaration order: trunk layers, then the value, normal,
    and edge heads. The order is the checkpoint layout."""
    if n_features < 1 or any(h < 1 for h in hidden) or len(hidden) < 1:
        raise RangeError("mlp needs a positive feature count and at least one positive hidden width")
    params = ParamSet()
    n_in = n_features
    for i, h in enumerate(hidden):
        params.add(f"{prefix}.fc{i}.w", linear_init(rng, n_in, h, dtype))
        params.add(f"{prefix}.fc{i}.b", np.zeros(h, dtype=dtype))
        n_in = h
    for head, width in (("value", 1), ("normal", 3), ("edge", 1)):
        params.add(f"{prefix}.{head}.w", linear_init(rng, n_in, width, dtype))
        params.add(f"{prefix}.{head}.b", np.zeros(width, dtype=dtype))
    return params


def mlp_forward(params: ParamSet, x: Tensor, prefix: str = "mlp") -> tuple[Tensor, Tensor, Tensor]:
    """(n, n_features) batch -> value (n,), unit normal (n, 3), edge (n,)."""
    if x.data.ndim != 2:
        raise DimensionError(f"mlp_forward expects a (n, features) batch, got shape {x.data.shape}")
    h = x
    i = 0
    while f"{prefix}.fc{i}.w" in params:
        h = tanh(add(matmul(h, params[f"{prefix}.fc{i}.w"]), params[f"{prefix}.fc{i}.b"]))
        i += 1
    n = x.data.shape[0]
    value = sigmoid(reshape(add(matmul(h, params[f"{prefix}.value.w"]), params[f"{prefix}.value.b"]), (n,)))
    raw_n = add(matmul(h, params[f"{prefix}.normal.w"]), params[f"{prefix}.normal.b"])
    inv_len = pow_const(add(reduce_sum(mul(raw_n, raw_n), axis=1, keepdims=True), _NORM_EPS), -0.5)
    normal = mul(raw_n, inv_len)
    edge = reshape(add(matmul(h, params[f"{prefix}.edge.w"]), params[f"{prefix}.edge.b"]), (n,))
    return value, normal, edge
