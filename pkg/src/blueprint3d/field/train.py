"""Reference training loop: one blueprint per step, exact gradients.

Each step encodes the four (optionally augmented) views of one blueprint,
evaluates the loss on a minibatch of its precomputed samples, and applies
an SGD-with-momentum (or Adam) update. Everything is driven by one seeded
generator, so equal seeds give bit-identical runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import RangeError
from ..sampling import SampleSet
from ..views import AugmentConfig, ViewSet, augment
from .layers import ParamSet, Tensor, backward
from .model import VIEW_ORDER, FieldConfig, field_forward, geometry_for_views, init_weights, loss_terms


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    iterations: int = 2000
    lam_value: float = 1.0
    lam_normal: float = 0.1
    lam_edge: float = 0.1
    batch_size: int = 1  # blueprints per step; the whole design assumes 1
    minibatch: int = 512  # sample records per step
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    augment_views: AugmentConfig | None = None

    def __post_init__(self):
        if self.batch_size != 1:
            raise RangeError("batch_size is fixed at one blueprint per step")
        if self.learning_rate < 0 or self.iterations < 0 or self.minibatch < 1:
            raise RangeError("learning_rate, iterations must be >= 0 and minibatch >= 1")
        if min(self.lam_value, self.lam_normal, self.lam_edge) < 0:
            raise RangeError("loss weights must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise RangeError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 <= self.momentum < 1.0):
            raise RangeError("momentum must be in [0, 1)")


def _entry_images(views: ViewSet) -> list[Tensor]:
    return [Tensor(views.entry(kind).image.data[None, :, :]) for kind in VIEW_ORDER]


def train(
    dataset: list[tuple[ViewSet, SampleSet]],
    field_cfg: FieldConfig,
    cfg: TrainConfig,
    params: ParamSet | None = None,
    on_step=None,
) -> tuple[ParamSet, list[tuple[int, float, float, float, float]]]:
    """Returns the trained parameters and the loss curve as
    (step, total, value, normal, edge) rows. `params` continues training
    from existing weights; `on_step(step, total)` is a progress hook."""
    if not dataset:
        raise RangeError("train needs at least one (views, samples) pair")
    if params is None:
        params = init_weights(field_cfg, cfg.seed)
    geometry = [geometry_for_views(views) for views, _ in dataset]
    base_images = [_entry_images(views) for views, _ in dataset]
    lam = (cfg.lam_value, cfg.lam_normal, cfg.lam_edge)
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(t.data) for t in params.tensors()]
    adam_m = [np.zeros_like(t.data) for t in params.tensors()]
    adam_v = [np.zeros_like(t.data) for t in params.tensors()]
    rows: list[tuple[int, float, float, float, float]] = []
    for step in range(cfg.iterations):
        bi = int(rng.integers(0, len(dataset)))
        views, samples = dataset[bi]
        cams, _ = geometry[bi]
        if cfg.augment_views is not None:
            aug_seed = int(rng.integers(0, 2**63 - 1))
            images = _entry_images(augment(views, replace(cfg.augment_views, seed=aug_seed)))
        else:
            images = base_images[bi]
        idx = rng.integers(0, len(samples.positions), size=cfg.minibatch)
        pts = samples.positions[idx].astype(np.float64)
        value, normal, edge, _ = field_forward(params, field_cfg, images, cams, pts)
        total, v_term, n_term, e_term = loss_terms(
            value,
            normal,
            edge,
            samples.value[idx],
            samples.normals[idx],
            samples.edge[idx],
            samples.is_surface[idx],
            lam,
        )
        params.zero_grads()
        backward(total)
        lr = cfg.learning_rate
        if cfg.optimizer == "sgd":
            for i, t in enumerate(params.tensors()):
                if t.grad is None:
                    continue
                velocity[i] = cfg.momentum * velocity[i] + t.grad
                t.data -= (lr * velocity[i]).astype(t.data.dtype)
        else:
            b1, b2 = cfg.adam_beta1, cfg.adam_beta2
            tstep = step + 1
            for i, t in enumerate(params.tensors()):
                if t.grad is None:
                    continue
                adam_m[i] = b1 * adam_m[i] + (1 - b1) * t.grad
                adam_v[i] = b2 * adam_v[i] + (1 - b2) * t.grad**2
                mhat = adam_m[i] / (1 - b1**tstep)
                vhat = adam_v[i] / (1 - b2**tstep)
                t.data -= (lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)).astype(t.data.dtype)
        rows.append((step, float(total.data), float(v_term.data), float(n_term.data), float(e_term.data)))
        if on_step is not None:
            on_step(step, float(total.data))
    return params, rows


def grad_check(loss_fn, params: ParamSet, eps: float = 1e-4) -> float:
    """Max relative error of analytic vs central-difference gradients.

    loss_fn(params) must return a scalar Tensor built from the given
    parameter set. Parameters are copied to float64 first; a coordinate
    where both gradients vanish counts as exact.
    """
    p64 = params.astype(np.float64)
    p64.zero_grads()
    loss = loss_fn(p64)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in p64.tensors()]
    worst = 0.0
    for ti, t in enumerate(p64.tensors()):
        flat = t.data.reshape(-1)
        ana = analytic[ti].reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + eps
            up = float(loss_fn(p64).data)
            flat[j] = keep - eps
            dn = float(loss_fn(p64).data)
            flat[j] = keep
            num = (up - dn) / (2.0 * eps)
            if num == 0.0 and ana[j] == 0.0:
                continue
            err = abs(num - ana[j]) / max(abs(num), abs(ana[j]))
            worst = max(worst, err)
    return worst
