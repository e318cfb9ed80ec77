"""File emitters for the CLI: binary PGM images, entropy tables and matplotlib figures."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .esa import EntropyMaskSet


def to_gray8(values) -> np.ndarray:
    """Map [0, 1] values to 0..255 with round-half-even."""
    return np.clip(np.rint(255.0 * np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray, comments: list[str] | None = None) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"PGM needs a 2-D uint8 image, got {img.dtype} {img.shape}")
    h, w = img.shape
    head = "P5\n" + "".join(f"# {c}\n" for c in comments or []) + f"{w} {h}\n255\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> tuple[np.ndarray, list[str]]:
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    comments = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comments.append(data[pos + 1 : end].decode().strip())
            pos = end + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pixels = np.frombuffer(data[pos + 1 : pos + 1 + w * h], dtype=np.uint8)
    return pixels.reshape(h, w), comments


def mask_image(masks: EntropyMaskSet, window: int) -> np.ndarray:
    grid = masks.fore_grid().astype(np.uint8) * 255
    return np.kron(grid, np.ones((window, window), dtype=np.uint8))


def write_entropy_csv(path, masks: EntropyMaskSet, merge: int) -> int:
    gh, gw = masks.grid
    fore = masks.fore_grid().ravel()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["window", "row", "col", "entropy_bits", "block_entropy_bits", "foreground"])
        for n in range(masks.n_windows):
            r, c = divmod(n, gw)
            block = masks.block_entropy[r // merge, c // merge]
            out.writerow([n, r, c, repr(float(masks.window_entropy[n])), repr(float(block)), int(fore[n])])
    return masks.n_windows


def mask_figure(path, imap: np.ndarray, masks: EntropyMaskSet, window: int) -> None:
    """Intensity map with the foreground windows outlined, next to the entropy grid."""
    fig = Figure(figsize=(9, 4), dpi=100)
    FigureCanvasAgg(fig)
    ax_img, ax_ent = fig.subplots(1, 2)
    ax_img.imshow(imap, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    ax_img.imshow(
        np.ma.masked_equal(mask_image(masks, window), 0), cmap="autumn", alpha=0.35, interpolation="nearest"
    )
    ax_img.set_title(f"foreground windows ({masks.fore_idx.size}/{masks.n_windows})")
    ax_img.set_axis_off()
    im = ax_ent.imshow(masks.window_entropy.reshape(masks.grid), cmap="viridis", interpolation="nearest")
    ax_ent.set_title(f"window entropy, E_avg = {masks.e_avg:.4f} bits")
    fig.colorbar(im, ax=ax_ent, label="bits")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})


def bench_figure(path, rows: list[dict]) -> None:
    fig = Figure(figsize=(7, 4), dpi=100)
    FigureCanvasAgg(fig)
    ax = fig.subplots()
    labels = [r["size"] for r in rows]
    x = np.arange(len(rows))
    width = 0.27
    for i, (key, name) in enumerate(
        [("pack_spikes_per_s", "pack"), ("unpack_spikes_per_s", "unpack"), ("naive_pack_spikes_per_s", "naive pack")]
    ):
        ax.bar(x + (i - 1) * width, [r[key] for r in rows], width, label=name)
    ax.set_yscale("log")
    ax.set_xticks(x, labels)
    ax.set_ylabel("spike sites / s")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
