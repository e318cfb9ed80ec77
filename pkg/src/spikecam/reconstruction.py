"""Classical spike-to-image reconstructions (playback and interval based)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spike_io import BoundsError, SpikeStream, _check_window
from .spike_sim import SensorConfig


@dataclass(frozen=True)
class IntensityMap:
    values: np.ndarray  # 1 x H x W, in [0, 1]
    window: tuple[int, int]

    @property
    def image(self) -> np.ndarray:
        return self.values[0]


def tfp(stream: SpikeStream, start: int, length: int) -> IntensityMap:
    """Texture from playback: spike count over the window divided by its length."""
    if length < 1:
        raise BoundsError("tfp window length must be at least 1")
    _check_window(stream, start, length)
    counts = stream.counts(start, length)
    return IntensityMap((counts / length)[None].astype(np.float64), (start, length))


def _last_before(dense: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """Index of the last spike strictly before ``limit`` per pixel, -1 if none."""
    times = np.arange(dense.shape[0], dtype=np.int64)[:, None, None]
    hit = (dense != 0) & (times < limit[None])
    return np.where(hit, times, -1).max(axis=0)


def _first_after(dense: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """Index of the first spike strictly after ``limit`` per pixel, -1 if none."""
    t = dense.shape[0]
    times = np.arange(t, dtype=np.int64)[:, None, None]
    hit = (dense != 0) & (times > limit[None])
    first = np.where(hit, times, t).min(axis=0)
    return np.where(first == t, -1, first)


def interspike_interval(stream: SpikeStream, t: int) -> np.ndarray:
    """Per-pixel interval in steps around step ``t``; 0 where undefined.

    The interval runs from the last spike at or before ``t`` to the first
    spike after it. Without a later spike the last complete interval before
    ``t`` is used, and without an earlier one the first complete interval
    after ``t``. Pixels with fewer than two spikes get 0.
    """
    if not 0 <= t < stream.t_len:
        raise BoundsError(f"step {t} outside [0, {stream.t_len})")
    dense = stream.to_dense()
    h, w = stream.height, stream.width
    at_t = np.full((h, w), t, dtype=np.int64)

    prev = _last_before(dense, at_t + 1)
    nxt = _first_after(dense, at_t)
    isi = np.where((prev >= 0) & (nxt >= 0), nxt - prev, 0)

    only_prev = (prev >= 0) & (nxt < 0)
    if only_prev.any():
        before = _last_before(dense, prev)
        isi = np.where(only_prev & (before >= 0), prev - before, isi)
    only_next = (prev < 0) & (nxt >= 0)
    if only_next.any():
        after = _first_after(dense, nxt)
        isi = np.where(only_next & (after >= 0), after - nxt, isi)
    return isi


def tfi(stream: SpikeStream, t: int, cfg: SensorConfig | None = None) -> IntensityMap:
    """Texture from interval: invert the firing law, ``I = theta / (lambda * ISI * dt)``.

    The sensor constants default to the ones recorded in the stream header.
    """
    if cfg is None:
        theta, lam, dt = stream.theta, stream.lambda_, stream.dt_us
    else:
        theta, lam, dt = cfg.theta, cfg.lambda_, cfg.dt_us
    isi = interspike_interval(stream, t)
    with np.errstate(divide="ignore"):
        value = np.where(isi > 0, theta / (lam * np.maximum(isi, 1) * dt), 0.0)
    return IntensityMap(np.clip(value, 0.0, 1.0)[None], (t, 1))


def intensity_map(stream: SpikeStream, mode: str = "count", cfg: SensorConfig | None = None) -> IntensityMap:
    """Collapse the whole stream to one firing-rate image.

    ``mode="count"`` is playback over the full extent; ``mode="interval"``
    uses the interval reconstruction at the middle step.
    """
    if mode == "count":
        return tfp(stream, 0, stream.t_len)
    if mode == "interval":
        m = tfi(stream, stream.t_len // 2, cfg)
        return IntensityMap(m.values, (0, stream.t_len))
    raise ValueError(f"unknown intensity map mode {mode!r}")
