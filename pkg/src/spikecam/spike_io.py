"""SPK1 spike-stream files, box annotations and dataset manifests.

SPK1 layout, all multi-byte fields little-endian::

    magic    4s   b"SPK1"
    version  u16  1
    width    u32
    height   u32
    t_len    u32
    dt_us    f64
    theta    f64
    lambda   f64
    payload  t_len planes of ceil(width*height/8) bytes

Inside a plane pixels run row-major and bit 0 of each byte is the leftmost
pixel. Unused bits of a plane's last byte are zero.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

MAGIC = b"SPK1"
VERSION = 1
HEADER = struct.Struct("<4sHIIIddd")


class SpikeFormatError(ValueError):
    """The byte source is not an SPK1 stream."""


class SpikeCorruptionError(SpikeFormatError):
    """An SPK1 stream is truncated or carries inconsistent bytes."""


class BoundsError(IndexError):
    pass


def plane_bytes(width: int, height: int) -> int:
    return (width * height + 7) // 8


@dataclass(frozen=True, eq=False)
class SpikeStream:
    """Packed binary volume of ``t_len`` planes of ``height x width`` bits."""

    width: int
    height: int
    t_len: int
    bits: np.ndarray = field(repr=False)
    dt_us: float = 1.0
    theta: float = 2.0
    lambda_: float = 1.0

    def __post_init__(self):
        if min(self.width, self.height, self.t_len) < 1:
            raise ValueError(f"stream dimensions must be positive: {self.width}x{self.height}x{self.t_len}")
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        expected = (self.t_len, plane_bytes(self.width, self.height))
        if bits.shape != expected:
            bits = bits.reshape(expected)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_dense(cls, dense, dt_us: float = 1.0, theta: float = 2.0, lambda_: float = 1.0) -> "SpikeStream":
        dense = np.asarray(dense)
        if dense.ndim != 3:
            raise ValueError(f"dense spikes must be T x H x W, got shape {dense.shape}")
        t, h, w = dense.shape
        flat = (dense != 0).reshape(t, h * w)
        bits = np.packbits(flat, axis=1, bitorder="little")
        return cls(w, h, t, bits, dt_us=dt_us, theta=theta, lambda_=lambda_)

    def to_dense(self) -> np.ndarray:
        """Unpack to a ``t_len x height x width`` uint8 array of 0/1."""
        n = self.width * self.height
        flat = np.unpackbits(self.bits, axis=1, count=n, bitorder="little")
        return flat.reshape(self.t_len, self.height, self.width)

    def plane(self, t: int) -> np.ndarray:
        if not 0 <= t < self.t_len:
            raise BoundsError(f"plane {t} outside [0, {self.t_len})")
        n = self.width * self.height
        return np.unpackbits(self.bits[t], count=n, bitorder="little").reshape(self.height, self.width)

    def counts(self, start: int = 0, length: int | None = None) -> np.ndarray:
        """Per-pixel spike counts over ``[start, start+length)``."""
        length = self.t_len - start if length is None else length
        _check_window(self, start, length)
        n = self.width * self.height
        total = np.zeros(n, dtype=np.int64)
        for t0 in range(start, start + length, 256):
            t1 = min(t0 + 256, start + length)
            total += np.unpackbits(self.bits[t0:t1], axis=1, count=n, bitorder="little").sum(axis=0, dtype=np.int64)
        return total.reshape(self.height, self.width)

    def meta(self) -> dict:
        return {"dt_us": self.dt_us, "theta": self.theta, "lambda_": self.lambda_}

    def __eq__(self, other):
        if not isinstance(other, SpikeStream):
            return NotImplemented
        return (
            (self.width, self.height, self.t_len) == (other.width, other.height, other.t_len)
            and self.meta() == other.meta()
            and np.array_equal(self.bits, other.bits)
        )

    __hash__ = None


def _check_window(stream: SpikeStream, start: int, length: int) -> None:
    if start < 0 or length < 0 or start + length > stream.t_len:
        raise BoundsError(f"window [{start}, {start + length}) outside stream of length {stream.t_len}")


def slice_time(stream: SpikeStream, start: int, length: int) -> SpikeStream:
    _check_window(stream, start, length)
    if length == 0:
        raise BoundsError("slice length must be at least 1")
    return SpikeStream(
        stream.width, stream.height, length, stream.bits[start : start + length].copy(), **stream.meta()
    )


def concat_time(streams: Iterable[SpikeStream]) -> SpikeStream:
    streams = list(streams)
    first = streams[0]
    for s in streams[1:]:
        if (s.width, s.height) != (first.width, first.height):
            raise ValueError("cannot concatenate streams of different resolution")
    bits = np.concatenate([s.bits for s in streams], axis=0)
    return SpikeStream(first.width, first.height, bits.shape[0], bits, **first.meta())


def write_stream(stream: SpikeStream, sink: BinaryIO) -> int:
    header = HEADER.pack(
        MAGIC, VERSION, stream.width, stream.height, stream.t_len, stream.dt_us, stream.theta, stream.lambda_
    )
    payload = stream.bits.tobytes()
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def read_stream(source: BinaryIO) -> SpikeStream:
    raw = source.read(HEADER.size)
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise SpikeFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < HEADER.size:
        raise SpikeCorruptionError(f"truncated header: expected {HEADER.size} bytes, got {len(raw)}")
    _, version, width, height, t_len, dt_us, theta, lambda_ = HEADER.unpack(raw)
    if version != VERSION:
        raise SpikeFormatError(f"unsupported SPK1 version {version}")
    if min(width, height, t_len) < 1:
        raise SpikeCorruptionError(f"header declares an empty volume {width}x{height}x{t_len}")
    per_plane = plane_bytes(width, height)
    expected = per_plane * t_len
    payload = source.read(expected)
    if len(payload) < expected:
        raise SpikeCorruptionError(
            f"truncated payload: expected {expected} bytes, got {len(payload)} ({expected - len(payload)} missing)"
        )
    if source.read(1):
        raise SpikeCorruptionError(f"trailing bytes after {expected}-byte payload")
    bits = np.frombuffer(payload, dtype=np.uint8).reshape(t_len, per_plane)
    spare = per_plane * 8 - width * height
    if spare and (bits[:, -1] >> (8 - spare)).any():
        raise SpikeCorruptionError("non-zero padding bits in plane tail")
    return SpikeStream(width, height, t_len, bits.copy(), dt_us=dt_us, theta=theta, lambda_=lambda_)


def save_stream(stream: SpikeStream, path) -> int:
    with open(path, "wb") as fh:
        return write_stream(stream, fh)


def load_stream(path) -> SpikeStream:
    with open(path, "rb") as fh:
        return read_stream(fh)


def to_bytes(stream: SpikeStream) -> bytes:
    buf = io.BytesIO()
    write_stream(stream, buf)
    return buf.getvalue()


def from_bytes(data: bytes) -> SpikeStream:
    return read_stream(io.BytesIO(data))


# annotations -----------------------------------------------------------------


@dataclass(frozen=True)
class BBoxAnnotation:
    t_step: int
    class_id: int
    x_b: float
    y_b: float
    w_b: float
    h_b: float

    def check(self, width: int, height: int, t_len: int) -> None:
        if not 0 <= self.t_step < t_len:
            raise BoundsError(f"annotation t_step {self.t_step} outside [0, {t_len})")
        x0, x1 = self.x_b - self.w_b / 2, self.x_b + self.w_b / 2
        y0, y1 = self.y_b - self.h_b / 2, self.y_b + self.h_b / 2
        if x1 <= 0 or y1 <= 0 or x0 >= width or y0 >= height:
            raise BoundsError(f"box {self} does not intersect the {width}x{height} image")


def format_annotations(boxes: Iterable[BBoxAnnotation]) -> str:
    # repr() of a float is the shortest string that parses back to it
    lines = ["# t_step class_id x y w h"]
    for b in boxes:
        lines.append(f"{b.t_step} {b.class_id} {b.x_b!r} {b.y_b!r} {b.w_b!r} {b.h_b!r}")
    return "\n".join(lines) + "\n"


def parse_annotations(text: str) -> list[BBoxAnnotation]:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"annotation line {lineno}: expected 6 fields, got {len(parts)}")
        t, c = int(parts[0]), int(parts[1])
        x, y, w, h = (float(p) for p in parts[2:])
        boxes.append(BBoxAnnotation(t, c, x, y, w, h))
    return boxes


def save_annotations(boxes, path) -> None:
    Path(path).write_text(format_annotations(boxes))


def load_annotations(path) -> list[BBoxAnnotation]:
    return parse_annotations(Path(path).read_text())


def align_frame_labels(boxes: Iterable[BBoxAnnotation], hold_steps: int) -> list[BBoxAnnotation]:
    """Map frame-indexed labels onto spike steps: ``t_step = frame * hold_steps``."""
    return [BBoxAnnotation(b.t_step * hold_steps, b.class_id, b.x_b, b.y_b, b.w_b, b.h_b) for b in boxes]


# manifest --------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    spike_path: str
    annotation_path: str
    classes: tuple[str, ...] = ()


@dataclass
class DatasetManifest:
    """Plain-text index: one ``spike<TAB>annotations<TAB>class,class`` line per entry.

    Relative paths resolve against the manifest's directory.
    """

    entries: list[ManifestEntry] = field(default_factory=list)

    def dumps(self) -> str:
        lines = ["# spike_file\tannotation_file\tclasses"]
        for e in self.entries:
            bad = [p for p in (e.spike_path, e.annotation_path) if "\t" in p or "\n" in p]
            bad += [c for c in e.classes if set(c) & {"\t", "\n", ","}]
            if bad:
                raise ValueError(f"manifest field {bad[0]!r} contains a separator")
            lines.append("\t".join([e.spike_path, e.annotation_path, ",".join(e.classes)]))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DatasetManifest":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"manifest line {lineno}: expected 3 tab-separated fields")
            classes = tuple(c for c in parts[2].split(",") if c)
            entries.append(ManifestEntry(parts[0], parts[1], classes))
        return cls(entries)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path, check: bool = True) -> "DatasetManifest":
        path = Path(path)
        manifest = cls.loads(path.read_text())
        if check:
            for e in manifest.entries:
                for p in (e.spike_path, e.annotation_path):
                    full = path.parent / p
                    if not full.exists():
                        raise FileNotFoundError(f"manifest {path} references missing file {os.fspath(full)}")
        return manifest

    def resolve(self, base, entry: ManifestEntry) -> tuple[Path, Path]:
        base = Path(base)
        return base / entry.spike_path, base / entry.annotation_path
