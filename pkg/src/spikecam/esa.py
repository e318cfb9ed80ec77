"""Entropy selective attention.

The intensity map is lifted to features, windows are scored by the Shannon
entropy of their softmax-normalised activations, windows whose merged-block
entropy falls in ``[lo, hi] * E_avg`` get deformable window self-attention
and every other window is rescaled by a spatial attention map. A channel
attention vector multiplies the recombined result.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .params import Initializer, ParamSet
from .reconstruction import IntensityMap
from .tensor_core import (
    ConfigurationError,
    ShapeError,
    as_tensor,
    bilinear_sample,
    conv2d,
    leaky_relu,
    relu,
    softmax,
    window_merge,
    window_partition,
)

_LN2 = np.log(2.0)
# interval ends are widened by this much (relative to E_avg) so that equal
# entropies whose means differ by round-off still count as ties
_RANGE_RTOL = 1e-12


@dataclass(frozen=True)
class EsaConfig:
    window: int = 8
    merge: int = 2
    entropy_range: tuple[float, float] = (0.5, 1.0)
    channels: int = 64
    deform_kernel: int = 3
    channel_mode: str = "per_channel"  # or "mean_first"
    reduce_channels: int | None = None
    positional_encoding: bool = True
    slope: float = 0.01

    def __post_init__(self):
        lo, hi = self.entropy_range
        if not 0 <= lo < hi:
            raise ConfigurationError(f"entropy range must satisfy 0 <= lo < hi, got {self.entropy_range}")
        if self.window < 1 or self.merge < 1 or self.channels < 1:
            raise ConfigurationError("window, merge and channels must be positive")
        if self.deform_kernel < 1 or self.deform_kernel % 2 == 0:
            raise ConfigurationError("deformable kernel side must be odd")
        if self.channel_mode not in ("per_channel", "mean_first"):
            raise ConfigurationError(f"unknown channel mode {self.channel_mode!r}")

    @property
    def tile(self) -> int:
        return self.window * self.merge

    def check_size(self, h: int, w: int) -> None:
        if h % self.tile or w % self.tile:
            raise ShapeError(f"spatial size {h}x{w} not divisible by window*merge = {self.tile}")


@dataclass
class EsaParams:
    channels: int
    deform_kernel: int = 3
    weights: ParamSet = field(default_factory=ParamSet, repr=False)

    def copy(self) -> "EsaParams":
        return replace(self, weights=self.weights.copy())

    @classmethod
    def init(cls, cfg: EsaConfig, seed: int = 0) -> "EsaParams":
        c, k = cfg.channels, cfg.deform_kernel
        ini = Initializer(seed)
        w = ParamSet()
        w["lift.w"], w["lift.b"] = ini.conv(c, 1, 1)
        w["pe1.w"], w["pe1.b"] = ini.conv(c, c + 2, 3)
        w["pe2.w"], w["pe2.b"] = ini.conv(c, c, 3)
        w["off1.w"], w["off1.b"] = ini.conv(c, c, 3)
        w["off2.w"], w["off2.b"] = ini.conv(2, c, 3)
        w["sa.w"], w["sa.b"] = ini.conv(c, c, 3)
        w["ca.w"], w["ca.b"] = ini.conv(c, c, 1)
        w["deform.w"], _ = ini.conv(c, c, k)
        w["wq"], _ = ini.dense(c, c)
        w["wk"], _ = ini.dense(c, c)
        if cfg.reduce_channels:
            w["reduce.w"], w["reduce.b"] = ini.conv(cfg.reduce_channels, c, 1)
        # offsets start near zero so sampling stays close to the window grid
        w["off2.w"] *= 0.1
        w["off2.b"] *= 0.1
        return cls(c, k, w)


@dataclass(frozen=True)
class EntropyMaskSet:
    window_entropy: np.ndarray  # flat, one value per window, row-major over the window grid
    fore_idx: np.ndarray
    back_idx: np.ndarray
    e_avg: float
    grid: tuple[int, int]
    block_entropy: np.ndarray  # merged-block means, shape grid / merge

    @property
    def n_windows(self) -> int:
        return self.window_entropy.size

    def fore_grid(self) -> np.ndarray:
        g = np.zeros(self.n_windows, dtype=bool)
        g[self.fore_idx] = True
        return g.reshape(self.grid)


@dataclass
class EsaStages:
    F: np.ndarray
    F_prime: np.ndarray
    offset: np.ndarray
    SA: np.ndarray
    CA: np.ndarray
    masks: EntropyMaskSet
    fore: np.ndarray  # K x M^2 x C
    output: np.ndarray


def positional_encoding(h: int, w: int) -> np.ndarray:
    """Two channels holding row and column coordinates scaled to [0, 1]."""
    ys = np.linspace(0.0, 1.0, h) if h > 1 else np.zeros(1)
    xs = np.linspace(0.0, 1.0, w) if w > 1 else np.zeros(1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy, xx])


def preprocess(imap, params: EsaParams, cfg: EsaConfig | None = None):
    """Return ``(F, F', F_offset, SA, CA)`` for an intensity map."""
    cfg = cfg or EsaConfig(channels=params.channels)
    x = imap.values if isinstance(imap, IntensityMap) else as_tensor(imap)
    if x.ndim == 2:
        x = x[None]
    if x.shape[0] != 1:
        raise ShapeError(f"intensity map must be 1 x H x W, got {x.shape}")
    _, h, w = x.shape
    cfg.check_size(h, w)
    p = params.weights

    F = conv2d(x, p["lift.w"], 1, 0, p["lift.b"])
    pe = positional_encoding(h, w) if cfg.positional_encoding else np.zeros((2, h, w))
    Fp = conv2d(np.concatenate([F, pe]), p["pe1.w"], 1, 1, p["pe1.b"])
    Fp = conv2d(leaky_relu(Fp, cfg.slope), p["pe2.w"], 1, 1, p["pe2.b"])
    offset = conv2d(relu(conv2d(Fp, p["off1.w"], 1, 1, p["off1.b"])), p["off2.w"], 1, 1, p["off2.b"])
    SA = conv2d(Fp, p["sa.w"], 1, 1, p["sa.b"]).mean(axis=0, keepdims=True)
    CA = conv2d(Fp, p["ca.w"], 1, 0, p["ca.b"]).mean(axis=(1, 2)).reshape(-1, 1, 1)
    return F, Fp, offset, SA, CA


def window_entropy(fprime, cfg: EsaConfig) -> np.ndarray:
    """Per-window Shannon entropy in bits, shaped as the window grid.

    In ``per_channel`` mode each channel gets its own softmax over the
    window's M^2 pixels and the channel entropies are averaged.
    """
    x = as_tensor(fprime, 3, "features")
    m = cfg.window
    c, h, w = x.shape
    if h % m or w % m:
        raise ShapeError(f"spatial size {h}x{w} not divisible by window {m}")
    win = window_partition(x, m)  # n x M^2 x C
    if cfg.channel_mode == "mean_first":
        win = win.mean(axis=2, keepdims=True)
    z = win - win.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - log_z
    ent = -(np.exp(logp) * logp).sum(axis=1) / _LN2  # n x C
    ent = np.clip(ent.mean(axis=1), 0.0, np.log2(m * m))
    return ent.reshape(h // m, w // m)


def generate_masks(entropies, cfg: EsaConfig) -> EntropyMaskSet:
    e = np.asarray(entropies, dtype=np.float64)
    if e.ndim == 1:
        e = e[None]
    gh, gw = e.shape
    r = cfg.merge
    if gh % r or gw % r:
        raise ShapeError(f"window grid {gh}x{gw} not divisible by merge {r}")
    blocks = e.reshape(gh // r, r, gw // r, r).mean(axis=(1, 3))
    e_avg = float(e.mean())
    lo, hi = cfg.entropy_range
    tol = _RANGE_RTOL * abs(e_avg)
    fore_block = (blocks >= lo * e_avg - tol) & (blocks <= hi * e_avg + tol)
    fore = np.repeat(np.repeat(fore_block, r, axis=0), r, axis=1).ravel()
    idx = np.arange(e.size)
    return EntropyMaskSet(e.ravel().copy(), idx[fore], idx[~fore], e_avg, (gh, gw), blocks)


def window_pixel_coords(idx: np.ndarray, m: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column of every pixel of the listed windows, each ``K x M^2``."""
    per_row = w // m
    wy, wx = np.divmod(np.asarray(idx, dtype=np.int64), per_row)
    py, px = np.divmod(np.arange(m * m), m)
    return wy[:, None] * m + py[None], wx[:, None] * m + px[None]


def deform_sample(F, offset, kernel, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Deformable convolution of ``F`` evaluated only at pixels ``(ys, xs)``.

    One ``(dy, dx)`` displacement per output pixel is shared by every tap.
    Returns an array shaped ``ys.shape + (C_out,)``.
    """
    F = as_tensor(F, 3, "F")
    kernel = as_tensor(kernel, 4, "kernel")
    cout, cin, k, _ = kernel.shape
    if cin != F.shape[0]:
        raise ShapeError(f"deformable kernel expects {cin} channels, F has {F.shape[0]}")
    dy = offset[0][ys, xs]
    dx = offset[1][ys, xs]
    half = k // 2
    out = np.zeros((cout,) + ys.shape)
    for i in range(k):
        for j in range(k):
            coords = np.stack([ys + (i - half) + dy, xs + (j - half) + dx])
            s = bilinear_sample(F, coords)  # C x K x M^2
            out += np.tensordot(np.ascontiguousarray(kernel[:, :, i, j]), s, axes=(1, 0))
    return np.moveaxis(out, 0, -1)


def window_attention(X, V, wq, wk) -> np.ndarray:
    """``softmax(X Wq (X Wk)^T / sqrt(d)) V`` per window, ``d`` = channel count."""
    q = X @ wq
    k = X @ wk
    att = softmax(q @ np.swapaxes(k, -1, -2) / np.sqrt(X.shape[-1]), axis=-1)
    return att @ V


def foreground_attention(F, offset, masks: EntropyMaskSet, params: EsaParams, cfg: EsaConfig) -> np.ndarray:
    F = as_tensor(F, 3, "F")
    c, h, w = F.shape
    m = cfg.window
    if masks.fore_idx.size == 0:
        return np.zeros((0, m * m, c))
    ys, xs = window_pixel_coords(masks.fore_idx, m, w)
    X = deform_sample(F, offset, params.weights["deform.w"], ys, xs)
    V = np.moveaxis(F[:, ys, xs], 0, -1)
    return window_attention(X, V, params.weights["wq"], params.weights["wk"])


def run_esa(imap, params: EsaParams, cfg: EsaConfig) -> EsaStages:
    F, Fp, offset, SA, CA = preprocess(imap, params, cfg)
    feats = Fp
    if cfg.reduce_channels:
        feats = conv2d(Fp, params.weights["reduce.w"], 1, 0, params.weights["reduce.b"])
    masks = generate_masks(window_entropy(feats, cfg), cfg)
    fore = foreground_attention(F, offset, masks, params, cfg)

    c, h, w = F.shape
    m = cfg.window
    win = window_partition(F, m)
    sa = window_partition(SA, m)
    out = np.zeros_like(win)
    out[masks.back_idx] = win[masks.back_idx] * sa[masks.back_idx]
    out[masks.fore_idx] = fore
    merged = window_merge(out, m, h, w) * CA
    return EsaStages(F, Fp, offset, SA, CA, masks, fore, merged)


def esa_forward(imap, params: EsaParams, cfg: EsaConfig) -> np.ndarray:
    return run_esa(imap, params, cfg).output
