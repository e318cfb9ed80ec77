"""End-to-end pipelines behind the CLI subcommands."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import report
from .config import PipelineConfig
from .esa import EsaParams, generate_masks, preprocess, run_esa, window_entropy
from .ffm import FfmParams, ffm_forward
from .params import save_params
from .reconstruction import IntensityMap, intensity_map, tfi, tfp
from .spike_io import (
    BBoxAnnotation,
    SpikeStream,
    align_frame_labels,
    load_annotations,
    load_stream,
    save_annotations,
    save_stream,
)
from .spike_sim import FrameSequence, simulate
from .tbtm import TbtmParams, tbtm_forward, temporal_blocks

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".pgm", ".pnm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg"}


class PipelineError(RuntimeError):
    """Failure tagged with the stage and input that caused it."""

    def __init__(self, stage: str, subject, message: str):
        super().__init__(f"{stage}: {subject}: {message}")
        self.stage = stage


def load_frames(frames_dir) -> list[np.ndarray]:
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise PipelineError("simulate", frames_dir, "not a directory")
    paths = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise PipelineError("simulate", frames_dir, "no image frames found")
    frames = []
    for p in paths:
        try:
            with Image.open(p) as im:
                arr = np.asarray(im.convert("I") if im.mode in ("I;16", "I;16B", "I") else im.convert("L"))
        except OSError as exc:
            raise PipelineError("simulate", p, f"unreadable image ({exc})") from None
        scale = 65535.0 if arr.dtype != np.uint8 else 255.0
        frames.append(arr.astype(np.float64) / scale)
        if frames[-1].shape != frames[0].shape:
            raise PipelineError(
                "simulate", p, f"resolution {frames[-1].shape} differs from {frames[0].shape} of {paths[0].name}"
            )
    return frames


def cmd_simulate(frames_dir, out_path, cfg: PipelineConfig, annotations=None, out_annotations=None):
    frames = load_frames(frames_dir)
    seq = FrameSequence(frames, cfg.hold_steps)
    stream = simulate(seq, cfg.sensor())
    save_stream(stream, out_path)
    boxes: list[BBoxAnnotation] = []
    if annotations is not None:
        try:
            boxes = align_frame_labels(load_annotations(annotations), cfg.hold_steps)
            for b in boxes:
                b.check(stream.width, stream.height, stream.t_len)
        except (ValueError, IndexError) as exc:
            raise PipelineError("simulate", annotations, str(exc)) from None
    if out_annotations is None:
        out_annotations = Path(out_path).with_suffix(".txt")
    save_annotations(boxes, out_annotations)
    return stream, boxes


def _read(stage: str, path) -> SpikeStream:
    try:
        return load_stream(path)
    except (ValueError, OSError) as exc:
        raise PipelineError(stage, path, str(exc)) from None


def reconstruct_map(stream: SpikeStream, mode: str, window=None) -> IntensityMap:
    if mode == "tfp":
        start, length = window if window else (0, stream.t_len)
        return tfp(stream, start, length)
    if mode == "tfi":
        t = window[0] if window else stream.t_len // 2
        return tfi(stream, t)
    if mode == "imap":
        return intensity_map(stream)
    raise ValueError(f"unknown reconstruction mode {mode!r}")


def cmd_reconstruct(spike_path, out_path, mode: str = "tfp", window=None) -> np.ndarray:
    stream = _read("reconstruct", spike_path)
    try:
        m = reconstruct_map(stream, mode, window)
    except (ValueError, IndexError) as exc:
        raise PipelineError("reconstruct", spike_path, str(exc)) from None
    img = report.to_gray8(m.image)
    report.write_pgm(out_path, img, [f"spikecam {mode} window={m.window[0]}:{m.window[1]}"])
    return img


def pad_to(x: np.ndarray, tile: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Zero-pad the trailing two axes up to multiples of ``tile``."""
    h, w = x.shape[-2:]
    ph, pw = -h % tile, -w % tile
    if ph or pw:
        x = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)])
    return x, (ph, pw)


@dataclass
class MaskResult:
    masks: object
    imap: np.ndarray
    padding: tuple[int, int]


def cmd_mask(spike_path, out_pgm, cfg: PipelineConfig, csv_path=None, figure_path=None, source: str = "imap"):
    """Entropy-block foreground mask.

    ``source="imap"`` scores windows of the intensity map itself;
    ``source="features"`` scores the seeded preprocess features instead.
    """
    stream = _read("mask", spike_path)
    esa_cfg = cfg.esa()
    imap = intensity_map(stream, cfg.imap_mode, cfg.sensor()).values
    padded, pad = pad_to(imap, esa_cfg.tile)
    try:
        if source == "imap":
            feats = padded
        elif source == "features":
            params = EsaParams.init(esa_cfg, cfg.seed)
            feats = preprocess(padded, params, esa_cfg)[1]
        else:
            raise ValueError(f"unknown mask source {source!r}")
        masks = generate_masks(window_entropy(feats, esa_cfg), esa_cfg)
    except ValueError as exc:
        raise PipelineError("mask", spike_path, str(exc)) from None

    h, w = stream.height, stream.width
    comments = [f"spikecam mask window={esa_cfg.window} merge={esa_cfg.merge} source={source}"]
    if any(pad):
        comments.append(f"zero-padded {h}x{w} -> {h + pad[0]}x{w + pad[1]}")
    report.write_pgm(out_pgm, report.mask_image(masks, esa_cfg.window), comments)
    if csv_path is not None:
        report.write_entropy_csv(csv_path, masks, esa_cfg.merge)
    if figure_path is not None:
        report.mask_figure(figure_path, padded[0], masks, esa_cfg.window)
    return MaskResult(masks, padded[0], pad)


def build_params(cfg: PipelineConfig, n_blocks: int, seed: int):
    """Seeded parameters for all three modules, one child seed each."""
    s_tbtm, s_ffm, s_esa = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3))
    tbtm = TbtmParams.init(
        s_tbtm,
        block_len=cfg.block_len,
        delta=cfg.delta,
        c_mid=cfg.c_mid,
        c_branch=cfg.c_branch,
        channels=cfg.channels,
        reduction=cfg.se_reduction,
    )
    ffm = FfmParams.init(cfg.channels, n_blocks, s_ffm, normalize=cfg.ffm_normalize)
    esa = EsaParams.init(cfg.esa(), s_esa)
    return tbtm, ffm, esa


@dataclass
class ForwardResult:
    output: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    n_blocks: int
    padding: tuple[int, int]


def upper_branch(dense: np.ndarray, tbtm: TbtmParams, ffm: FfmParams, starts, threads: int = 1) -> np.ndarray:
    blocks = [dense[s : s + tbtm.block_len] for s in starts]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            feats = list(pool.map(lambda b: tbtm_forward(b, tbtm), blocks))
    else:
        feats = [tbtm_forward(b, tbtm) for b in blocks]
    return ffm_forward(feats, ffm)


def forward(stream: SpikeStream, cfg: PipelineConfig, seed: int | None = None, threads: int = 1) -> ForwardResult:
    seed = cfg.seed if seed is None else seed
    esa_cfg = cfg.esa()
    dense, pad = pad_to(stream.to_dense().astype(np.float64), esa_cfg.tile)
    starts = temporal_blocks(stream.t_len, cfg.block_len, cfg.block_stride)
    tbtm, ffm, esa = build_params(cfg, len(starts), seed)

    upper = upper_branch(dense, tbtm, ffm, starts, threads)
    imap = intensity_map(stream, cfg.imap_mode, cfg.sensor()).values
    lower = run_esa(pad_to(imap, esa_cfg.tile)[0], esa, esa_cfg).output

    h, w = stream.height, stream.width
    upper, lower = upper[:, :h, :w], lower[:, :h, :w]
    return ForwardResult(upper + lower, upper, lower, len(starts), pad)


def cmd_forward(spike_path, out_path, cfg: PipelineConfig, seed: int | None = None, threads: int = 1,
                export_branches: bool = False) -> dict:
    stream = _read("forward", spike_path)
    try:
        res = forward(stream, cfg, seed, threads)
    except ValueError as exc:
        raise PipelineError("forward", spike_path, str(exc)) from None
    save_params({"features": res.output}, out_path)
    if export_branches:
        out = Path(out_path)
        save_params({"features": res.upper}, out.with_name(out.stem + ".upper" + out.suffix))
        save_params({"features": res.lower}, out.with_name(out.stem + ".lower" + out.suffix))
    c, h, w = res.output.shape
    return {
        "shape": f"{c}x{h}x{w}",
        "blocks": res.n_blocks,
        "min": float(res.output.min()),
        "max": float(res.output.max()),
        "mean": float(res.output.mean()),
    }
