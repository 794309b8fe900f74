"""Optimization-based style transfer.

Minimizes a weighted sum of a content loss (squared feature distance at
chosen layers) and a style loss (weighted per-layer Gram discrepancies)
over the pixels of a generated image, with the backbone weights frozen.

Loss conventions:

* content term per layer: ``0.5 * sum((F - P)^2)``
* per-layer style error: ``sum((Gx - Ga)^2) / (4 N^2 M^2)`` with N the
  channel count and M the spatial size of the generated image's map
* total: ``content_weight * content + style_weight * style``

The optimizer is plain gradient descent with fixed step size and classical
momentum, with pixels clipped to the valid normalized range after every
step; runs are deterministic given the seed.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .backbone import BackboneModel, FeatureMap, GramMatrix
from .errors import DivergedLoss, RangeMismatch, ShapeMismatch
from .images import ImageTensor, Range, denormalize

__all__ = [
    "InitMode",
    "GatysConfig",
    "LossBreakdown",
    "IterationTrace",
    "content_loss",
    "layer_style_error",
    "style_loss",
    "total_loss",
    "run_gatys",
]


class InitMode(enum.Enum):
    CONTENT_COPY = "content_copy"
    NOISE = "noise"


@dataclass
class GatysConfig:
    content_layers: tuple[str, ...]
    style_layers: tuple[str, ...]
    layer_weights: tuple[float, ...]
    content_weight: float = 1.0
    style_weight: float = 1e3
    iterations: int = 50
    step_size: float = 0.02
    init: InitMode = InitMode.CONTENT_COPY
    seed: int = 0
    momentum: float = 0.9

    def __post_init__(self):
        if len(self.layer_weights) != len(self.style_layers):
            raise ShapeMismatch("layer_weights must match style_layers in length")
        if any(w < 0 for w in self.layer_weights):
            raise ValueError("layer weights must be >= 0")
        if sum(self.layer_weights) <= 0:
            raise ValueError("layer weights must not all be zero")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.content_weight <= 0 or self.style_weight < 0:
            raise ValueError("content_weight must be > 0 and style_weight >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")


@dataclass
class LossBreakdown:
    content: float
    style: float
    per_layer_E: list[float]
    total: float


@dataclass
class IterationTrace:
    losses: list[LossBreakdown] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)


def content_loss(f: FeatureMap, p: FeatureMap) -> float:
    """0.5 * sum of squared elementwise feature differences."""
    if f.data.shape != p.data.shape:
        raise ShapeMismatch(f"feature shapes differ: {f.data.shape} vs {p.data.shape}")
    d = f.data - p.data
    return 0.5 * float((d * d).sum())


def layer_style_error(gx: GramMatrix, ga: GramMatrix, n: int, m: int) -> float:
    """Per-layer Gram discrepancy normalized by 1 / (4 N^2 M^2)."""
    if gx.data.shape != ga.data.shape:
        raise ShapeMismatch(f"gram shapes differ: {gx.data.shape} vs {ga.data.shape}")
    if m <= 0 or n <= 0:
        raise ValueError("N and M must be positive")
    d = gx.data - ga.data
    return float((d * d).sum()) / (4.0 * n * n * m * m)


def style_loss(errors: list[float], weights: list[float]) -> float:
    """Weighted sum of per-layer style errors."""
    if len(errors) != len(weights):
        raise ShapeMismatch("errors and weights must have equal length")
    return float(sum(w * e for w, e in zip(weights, errors)))


def total_loss(content: float, style: float, content_weight: float, style_weight: float) -> float:
    return content_weight * content + style_weight * style


def _clip_range(spec) -> tuple[np.ndarray, np.ndarray]:
    lo = ((0.0 - spec.channel_means) / spec.channel_stds).astype(np.float64).reshape(3, 1, 1)
    hi = ((1.0 - spec.channel_means) / spec.channel_stds).astype(np.float64).reshape(3, 1, 1)
    return lo, hi


def _losses_graph(
    x: ad.Var,
    model: BackboneModel,
    cfg: GatysConfig,
    content_targets: dict[str, np.ndarray],
    style_targets: dict[str, np.ndarray],
    style_dims: dict[str, tuple[int, int]],
) -> tuple[ad.Var, LossBreakdown]:
    want = set(cfg.content_layers) | set(cfg.style_layers)
    feats = model.forward_graph(x, want)

    content_terms = []
    for lid in cfg.content_layers:
        diff = ad.sub(feats[lid], ad.const(content_targets[lid]))
        content_terms.append((0.5, ad.sum_sq(diff)))
    content_v = ad.weighted_sum(content_terms)

    per_layer: list[ad.Var] = []
    for lid in cfg.style_layers:
        gx = ad.gram(feats[lid])
        diff = ad.sub(gx, ad.const(style_targets[lid]))
        n, m = style_dims[lid]
        per_layer.append(ad.weighted_sum([(1.0 / (4.0 * n * n * m * m), ad.sum_sq(diff))]))
    style_v = ad.weighted_sum([(w, e) for w, e in zip(cfg.layer_weights, per_layer)])

    total_v = ad.weighted_sum(
        [(cfg.content_weight, content_v), (cfg.style_weight, style_v)]
    )
    breakdown = LossBreakdown(
        content=content_v.item(),
        style=style_v.item(),
        per_layer_E=[e.item() for e in per_layer],
        total=total_v.item(),
    )
    return total_v, breakdown


def run_gatys(
    content: ImageTensor,
    style: ImageTensor,
    model: BackboneModel,
    cfg: GatysConfig,
) -> tuple[ImageTensor, IterationTrace]:
    """Optimize a generated image against frozen content/style targets.

    Inputs must already be resized and normalized to the backbone's input
    spec (BACKBONE range); the returned image is denormalized UNIT range.
    """
    if content.range is not Range.BACKBONE or style.range is not Range.BACKBONE:
        raise RangeMismatch("run_gatys expects BACKBONE-range inputs")

    c_arr = content.data.astype(np.float64).transpose(2, 0, 1)
    s_arr = style.data.astype(np.float64).transpose(2, 0, 1)

    want = set(cfg.content_layers) | set(cfg.style_layers)
    content_maps = model.forward_arrays(c_arr, want)
    style_maps = model.forward_arrays(s_arr, set(cfg.style_layers))

    content_targets = {lid: content_maps[lid].copy() for lid in cfg.content_layers}
    style_targets = {}
    style_dims = {}
    for lid, arr in style_maps.items():
        f = arr.reshape(arr.shape[0], -1)
        style_targets[lid] = f @ f.T
        # E_l normalization uses the generated image's map dimensions,
        # which match the content image's since the generated image starts
        # at the content shape
        g = content_maps[lid]
        style_dims[lid] = (g.shape[0], g.shape[1] * g.shape[2])

    rng = np.random.default_rng(cfg.seed)
    if cfg.init is InitMode.CONTENT_COPY:
        x0 = c_arr.copy()
    else:
        unit = rng.uniform(0.0, 1.0, size=c_arr.shape)
        means = model.input_spec.channel_means.astype(np.float64).reshape(3, 1, 1)
        stds = model.input_spec.channel_stds.astype(np.float64).reshape(3, 1, 1)
        x0 = (unit - means) / stds

    lo, hi = _clip_range(model.input_spec)
    x = ad.param(x0)
    velocity = np.zeros_like(x.value)
    trace = IterationTrace()

    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        x.grad = None
        total_v, breakdown = _losses_graph(
            x, model, cfg, content_targets, style_targets, style_dims
        )
        if not np.isfinite(breakdown.total):
            raise DivergedLoss(f"total loss diverged at iteration {it}", iteration=it)
        ad.backward(total_v)
        velocity *= cfg.momentum
        velocity -= cfg.step_size * x.grad
        x.value += velocity
        np.clip(x.value, lo, hi, out=x.value)
        trace.losses.append(breakdown)
        trace.wall_times.append(time.perf_counter() - t0)

    out = ImageTensor.from_array(x.value.transpose(1, 2, 0), Range.BACKBONE)
    return denormalize(out, model.input_spec), trace
