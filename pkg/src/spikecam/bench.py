"""Throughput benchmark: codec, simulator and ESA forward pass."""

from __future__ import annotations

import time

import numpy as np

from .esa import EsaConfig, EsaParams, esa_forward
from .pipeline import pad_to
from .reconstruction import intensity_map
from .spike_io import SpikeStream, from_bytes, plane_bytes, to_bytes
from .spike_sim import FrameSequence, SensorConfig, simulate

# the bit-by-bit reference packs at most this many spike sites per size
NAIVE_BUDGET = 1 << 20


def naive_pack(dense) -> bytes:
    """Reference packer, one bit at a time; same layout as SPK1 payloads.

    ``dense`` is a nested ``T x H x W`` sequence of 0/1 values.
    """
    t, h, w = len(dense), len(dense[0]), len(dense[0][0])
    per_plane = plane_bytes(w, h)
    out = bytearray(per_plane * t)
    for k in range(t):
        base = k * per_plane
        for y in range(h):
            for x in range(w):
                if dense[k][y][x]:
                    i = y * w + x
                    out[base + (i >> 3)] |= 1 << (i & 7)
    return bytes(out)


def parse_size(text: str) -> tuple[int, int, int]:
    """``"WxHxT"`` -> ``(W, H, T)``."""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValueError(f"size {text!r} is not WxHxT")
    w, h, t = (int(p) for p in parts)
    if min(w, h, t) < 1:
        raise ValueError(f"size {text!r} has a non-positive extent")
    return w, h, t


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def bench_size(width: int, height: int, t_len: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    dense = (rng.random((t_len, height, width)) < 0.5).astype(np.uint8)
    sites = dense.size

    def pack():
        return to_bytes(SpikeStream.from_dense(dense))

    data, t_pack = _timed(pack)
    back, t_unpack = _timed(lambda: from_bytes(data).to_dense())
    roundtrip = bool(np.array_equal(back, dense))

    n_naive = max(1, min(t_len, NAIVE_BUDGET // (width * height)))
    sub = dense[:n_naive].tolist()
    naive, t_naive = _timed(naive_pack, sub)
    header = len(data) - plane_bytes(width, height) * t_len
    roundtrip &= naive == data[header : header + len(naive)]

    frame = rng.random((height, width))
    cfg = SensorConfig(theta=2.0, lambda_=1.0, dt_us=1.0)
    _, t_sim = _timed(simulate, FrameSequence([frame], hold_steps=t_len), cfg)

    esa_cfg = EsaConfig()
    stream = SpikeStream.from_dense(dense[: min(t_len, 64)])
    imap = pad_to(intensity_map(stream).values, esa_cfg.tile)[0]
    params = EsaParams.init(esa_cfg, seed)
    _, t_esa = _timed(esa_forward, imap, params, esa_cfg)

    return {
        "size": f"{width}x{height}x{t_len}",
        "pack_spikes_per_s": sites / t_pack,
        "unpack_spikes_per_s": sites / t_unpack,
        "naive_pack_spikes_per_s": n_naive * width * height / t_naive,
        "sim_steps_per_s": t_len / t_sim,
        "esa_forward_s": t_esa,
        "roundtrip_ok": roundtrip,
    }


COLUMNS = [
    ("size", "{}"),
    ("pack_spikes_per_s", "{:.4g}"),
    ("unpack_spikes_per_s", "{:.4g}"),
    ("naive_pack_spikes_per_s", "{:.4g}"),
    ("sim_steps_per_s", "{:.4g}"),
    ("esa_forward_s", "{:.3f}"),
    ("roundtrip_ok", "{}"),
]


def format_table(rows: list[dict], sep: str = "\t") -> str:
    lines = [sep.join(c for c, _ in COLUMNS)]
    for r in rows:
        lines.append(sep.join(fmt.format(r[c]) for c, fmt in COLUMNS))
    return "\n".join(lines) + "\n"


def run_bench(sizes, seed: int = 0) -> list[dict]:
    return [bench_size(*parse_size(s) if isinstance(s, str) else s, seed=seed) for s in sizes]
