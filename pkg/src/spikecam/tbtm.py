"""Temporal texture module: four nested temporal crops, conv features, SE recalibration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .params import Initializer, ParamSet
from .tensor_core import (
    ConfigurationError,
    ShapeError,
    as_tensor,
    conv2d,
    global_avg_pool,
    leaky_relu,
    relu,
    sigmoid,
)

N_BRANCHES = 4


@dataclass
class TbtmParams:
    block_len: int = 41
    delta: int = 5
    c_mid: int = 16
    c_branch: int = 16
    channels: int = 64
    reduction: int = 4
    kernel: int = 3
    slope: float = 0.01
    weights: ParamSet = field(default_factory=ParamSet, repr=False)

    def __post_init__(self):
        if self.delta < 1:
            raise ConfigurationError(f"delta must be a positive integer, got {self.delta}")
        if self.block_len - 2 * (N_BRANCHES - 1) * self.delta < 1:
            raise ConfigurationError(
                f"block length {self.block_len} leaves no time channel for branch 3 at delta {self.delta}"
            )

    def branch_channels(self) -> list[int]:
        return [self.block_len - 2 * k * self.delta for k in range(N_BRANCHES)]

    def copy(self) -> "TbtmParams":
        return replace(self, weights=self.weights.copy())

    @classmethod
    def init(cls, seed: int = 0, **kw) -> "TbtmParams":
        p = cls(**kw)
        ini = Initializer(seed)
        w = ParamSet()
        for k, cin in enumerate(p.branch_channels()):
            w[f"branch{k}.conv1.w"], w[f"branch{k}.conv1.b"] = ini.conv(p.c_mid, cin, p.kernel)
            w[f"branch{k}.conv2.w"], w[f"branch{k}.conv2.b"] = ini.conv(p.c_branch, p.c_mid, p.kernel)
        cat = N_BRANCHES * p.c_branch
        hidden = max(cat // p.reduction, 1)
        w["se.fc1.w"], w["se.fc1.b"] = ini.dense(cat, hidden)
        w["se.fc2.w"], w["se.fc2.b"] = ini.dense(hidden, cat)
        w["out.w"], w["out.b"] = ini.conv(p.channels, cat, p.kernel)
        p.weights = w
        return p


def slice_branches(block, delta: int) -> list[np.ndarray]:
    """Branch ``k`` keeps time channels ``[k*delta, T' - k*delta)``."""
    x = as_tensor(block, 3, "block")
    t = x.shape[0]
    if delta < 0 or t - 2 * (N_BRANCHES - 1) * delta < 1:
        raise ConfigurationError(f"temporal length {t} too short for 4 branches at delta {delta}")
    return [x[k * delta : t - k * delta] for k in range(N_BRANCHES)]


def se_attention(input, w1, b1, w2, b2) -> np.ndarray:
    x = as_tensor(input, 3, "input")
    if w1.shape[0] != x.shape[0] or w2.shape[1] != x.shape[0]:
        raise ShapeError(f"SE weights sized for {w1.shape[0]} channels, input has {x.shape[0]}")
    g = global_avg_pool(x)
    s = sigmoid(relu(g @ w1 + b1) @ w2 + b2)
    return x * s[:, None, None]


def tbtm_forward(block, params: TbtmParams) -> np.ndarray:
    x = as_tensor(block, 3, "block")
    if x.shape[0] != params.block_len:
        raise ShapeError(f"block has {x.shape[0]} time channels, params expect {params.block_len}")
    w = params.weights
    pad = params.kernel // 2
    feats = []
    for k, s in enumerate(slice_branches(x, params.delta)):
        f = conv2d(s, w[f"branch{k}.conv1.w"], 1, pad, w[f"branch{k}.conv1.b"])
        f = leaky_relu(f, params.slope)
        feats.append(conv2d(f, w[f"branch{k}.conv2.w"], 1, pad, w[f"branch{k}.conv2.b"]))
    cat = np.concatenate(feats, axis=0)
    att = se_attention(cat, w["se.fc1.w"], w["se.fc1.b"], w["se.fc2.w"], w["se.fc2.b"])
    return leaky_relu(conv2d(att, w["out.w"], 1, pad, w["out.b"]), params.slope)


def temporal_blocks(t_len: int, block_len: int = 41, stride: int = 20) -> list[int]:
    """Start indices of overlapping blocks; a final block is pinned to the stream end."""
    if t_len < block_len:
        raise ConfigurationError(f"stream of {t_len} steps is shorter than one {block_len}-step block")
    if not 1 <= stride <= block_len:
        raise ConfigurationError(f"block stride must lie in [1, {block_len}] so blocks cover the stream, got {stride}")
    starts = list(range(0, t_len - block_len + 1, stride))
    if starts[-1] + block_len < t_len:
        starts.append(t_len - block_len)
    return starts
