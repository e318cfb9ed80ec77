"""Fusion of per-block features with sigmoid block weights from pooled descriptors."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .params import Initializer, ParamSet
from .tensor_core import ShapeError, as_tensor, global_avg_pool, relu, sigmoid, softmax


@dataclass
class FfmParams:
    channels: int
    n_blocks: int
    normalize: bool = False  # softmax the block weights instead of independent sigmoids
    weights: ParamSet = field(default_factory=ParamSet, repr=False)

    @property
    def hidden(self) -> int:
        return max(self.channels * self.n_blocks // 2, self.n_blocks)

    def copy(self) -> "FfmParams":
        return replace(self, weights=self.weights.copy())

    @classmethod
    def init(cls, channels: int, n_blocks: int, seed: int = 0, normalize: bool = False) -> "FfmParams":
        p = cls(channels, n_blocks, normalize)
        ini = Initializer(seed)
        w = ParamSet()
        w["fc1.w"], w["fc1.b"] = ini.dense(channels * n_blocks, p.hidden)
        w["fc2.w"], w["fc2.b"] = ini.dense(p.hidden, n_blocks)
        p.weights = w
        return p


def block_weights(features, params: FfmParams) -> np.ndarray:
    """The fusion weights ``alpha`` (length N) for a list of ``C x H x W`` maps."""
    feats = [as_tensor(f, 3, "feature") for f in features]
    if not feats:
        raise ShapeError("need at least one feature map")
    shape = feats[0].shape
    for i, f in enumerate(feats):
        if f.shape != shape:
            raise ShapeError(f"feature {i} has shape {f.shape}, expected {shape}")
    if len(feats) != params.n_blocks or shape[0] != params.channels:
        raise ShapeError(
            f"params sized for N={params.n_blocks}, C={params.channels}; got N={len(feats)}, C={shape[0]}"
        )
    w = params.weights
    g = np.concatenate([global_avg_pool(f) for f in feats])
    logits = relu(g @ w["fc1.w"] + w["fc1.b"]) @ w["fc2.w"] + w["fc2.b"]
    return softmax(logits) if params.normalize else sigmoid(logits)


def ffm_forward(features, params: FfmParams) -> np.ndarray:
    alpha = block_weights(features, params)
    out = np.zeros_like(np.asarray(features[0], dtype=np.float64))
    for a, f in zip(alpha, features):
        out += a * np.asarray(f, dtype=np.float64)
    return out
