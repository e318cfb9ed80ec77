"""Dense float64 kernels used by the texture, fusion and attention modules.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Every public kernel validates shapes up front and refuses to return
non-finite values.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SLOPE = 0.01


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class ConfigurationError(ValueError):
    """A kernel was asked for a geometry it cannot produce."""


def as_tensor(x, ndim: int | None = None, name: str = "input") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} has an empty axis: shape {arr.shape}")
    return arr


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise FloatingPointError(f"{op} produced non-finite values")
    return out


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ConfigurationError(
            f"output size ({size} + 2*{padding} - {k})/{stride} + 1 is not a positive integer"
        )
    return span // stride + 1


def conv2d(input, kernel, stride: int = 1, padding: int = 0, bias=None) -> np.ndarray:
    """2-D cross-correlation of a ``Cin x H x W`` input with ``Cout x Cin x k x k``.

    Accumulates one ``Cout x Cin`` matrix product per kernel tap, which keeps
    peak memory at a single shifted copy of the input instead of a full
    im2col buffer.
    """
    x = as_tensor(input, 3, "input")
    w = as_tensor(kernel, 4, "kernel")
    cin, h, wd = x.shape
    cout, kcin, kh, kw = w.shape
    if kcin != cin:
        raise ShapeError(f"kernel expects {kcin} input channels, input has {cin}")
    if kh != kw:
        raise ConfigurationError(f"kernel must be square, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)

    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    # tap-major copy so each per-tap weight matrix is contiguous; strided
    # operands make np.matmul skip BLAS
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    out = np.zeros((cout, ho * wo))
    for i in range(kh):
        for j in range(kw):
            patch = x[:, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
            out += taps[i, j] @ np.ascontiguousarray(patch).reshape(cin, ho * wo)
    out = out.reshape(cout, ho, wo)
    if bias is not None:
        b = as_tensor(bias, 1, "bias")
        if b.shape[0] != cout:
            raise ShapeError(f"bias has {b.shape[0]} entries, kernel has {cout} outputs")
        out += b[:, None, None]
    return _finite(out, "conv2d")


def leaky_relu(input, slope: float = DEFAULT_SLOPE) -> np.ndarray:
    if not 0.0 < slope < 1.0:
        raise ConfigurationError(f"slope must lie in (0, 1), got {slope}")
    x = as_tensor(input)
    return _finite(np.where(x >= 0, x, slope * x), "leaky_relu")


def relu(input) -> np.ndarray:
    x = as_tensor(input)
    return np.maximum(x, 0.0)


def sigmoid(input) -> np.ndarray:
    x = as_tensor(input)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(input, axis: int = -1) -> np.ndarray:
    x = as_tensor(input)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return _finite(z / z.sum(axis=axis, keepdims=True), "softmax")


def bilinear_sample(input, coords) -> np.ndarray:
    """Sample every channel of ``input`` at real-valued ``(y, x)`` positions.

    ``coords`` has shape ``2 x H' x W'``. Corners that fall outside the image
    contribute zero, so a position more than one pixel outside reads 0.
    """
    x = as_tensor(input, 3, "input")
    c = as_tensor(coords, 3, "coords")
    if c.shape[0] != 2:
        raise ShapeError(f"coords must have 2 leading channels (y, x), got {c.shape[0]}")
    ch, h, w = x.shape
    ys, xs = c[0], c[1]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)

    flat = x.reshape(ch, h * w)
    out = np.zeros((ch,) + ys.shape)
    for dy, dx, wgt in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w) & (wgt != 0)
        idx = np.where(ok, yy * w + xx, 0)
        out += np.where(ok, wgt, 0.0) * flat[:, idx]
    return _finite(out, "bilinear_sample")


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, name="a")
    b = as_tensor(b, name="b")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"batch dimensions differ: {a.shape[:-2]} vs {b.shape[:-2]}")
    return _finite(np.matmul(a, b), "matmul")


def global_avg_pool(input) -> np.ndarray:
    x = as_tensor(input, 3, "input")
    return x.reshape(x.shape[0], -1).mean(axis=1)


def window_partition(x: np.ndarray, m: int) -> np.ndarray:
    """``C x H x W`` -> ``(H/m * W/m) x m^2 x C``; windows and pixels row-major."""
    c, h, w = x.shape
    if h % m or w % m:
        raise ShapeError(f"spatial size {h}x{w} is not divisible by window {m}")
    t = x.reshape(c, h // m, m, w // m, m).transpose(1, 3, 2, 4, 0)
    return np.ascontiguousarray(t.reshape((h // m) * (w // m), m * m, c))


def window_merge(windows: np.ndarray, m: int, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`window_partition`."""
    n, mm, c = windows.shape
    if mm != m * m or n != (h // m) * (w // m):
        raise ShapeError(f"{windows.shape} windows do not tile a {h}x{w} image with window {m}")
    t = windows.reshape(h // m, w // m, m, m, c).transpose(4, 0, 2, 1, 3)
    return np.ascontiguousarray(t.reshape(c, h, w))
