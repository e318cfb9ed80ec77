import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikecam.spike_io import (
    BBoxAnnotation,
    BoundsError,
    DatasetManifest,
    ManifestEntry,
    SpikeCorruptionError,
    SpikeFormatError,
    SpikeStream,
    align_frame_labels,
    concat_time,
    format_annotations,
    from_bytes,
    load_annotations,
    load_stream,
    parse_annotations,
    save_annotations,
    save_stream,
    slice_time,
    to_bytes,
    write_stream,
)


def header_bytes(w, h, t, dt=1.0, theta=2.0, lam=1.0):
    """Header assembled field by field, independent of the codec's struct."""
    out = b"SPK1" + (1).to_bytes(2, "little")
    for v in (w, h, t):
        out += v.to_bytes(4, "little")
    for v in (dt, theta, lam):
        out += struct.pack("<d", v)
    return out


def naive_payload(dense):
    """Bit-by-bit packing: row-major, bit 0 is the leftmost pixel, planes byte aligned."""
    out = bytearray()
    for plane in dense:
        flat = [int(v) for v in plane.ravel()]
        for i in range(0, len(flat), 8):
            out.append(sum(b << k for k, b in enumerate(flat[i : i + 8])))
    return bytes(out)


def random_stream(rng, max_side=12, max_t=20):
    w, h, t = (int(v) for v in rng.integers(1, [max_side + 1, max_side + 1, max_t + 1]))
    dense = rng.random((t, h, w)) < rng.random()
    return SpikeStream.from_dense(dense, dt_us=float(rng.uniform(1, 50)), theta=2.0, lambda_=0.5), dense


class TestFormat:
    def test_single_spike(self):
        data = to_bytes(SpikeStream.from_dense(np.ones((1, 1, 1))))
        assert data == header_bytes(1, 1, 1) + b"\x01"

    def test_full_bytes(self):
        data = to_bytes(SpikeStream.from_dense(np.ones((2, 1, 8))))
        assert data[-2:] == b"\xff\xff" and len(data) == len(header_bytes(8, 1, 2)) + 2

    def test_leftmost_pixel_is_bit_zero(self):
        dense = np.zeros((1, 2, 5), dtype=bool)
        dense[0, 0, 0] = dense[0, 1, 4] = True  # flat positions 0 and 9
        assert to_bytes(SpikeStream.from_dense(dense))[-2:] == bytes([0x01, 0x02])

    def test_byte_count_returned(self):
        s = SpikeStream.from_dense(np.zeros((3, 3, 3)))
        assert write_stream(s, io.BytesIO()) == len(header_bytes(3, 3, 3)) + 3 * 2

    def test_random_streams_against_naive_packer(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            s, dense = random_stream(rng)
            assert to_bytes(s) == header_bytes(s.width, s.height, s.t_len, s.dt_us, 2.0, 0.5) + naive_payload(dense)


class TestRoundTrip:
    def test_random_round_trips(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            s, dense = random_stream(rng)
            back = from_bytes(to_bytes(s))
            assert back == s
            assert np.array_equal(back.to_dense(), dense)

    def test_bytes_round_trip(self):
        rng = np.random.default_rng(7)
        s, _ = random_stream(rng)
        data = to_bytes(s)
        assert to_bytes(from_bytes(data)) == data

    def test_file_round_trip(self, tmp_path):
        s, _ = random_stream(np.random.default_rng(8))
        save_stream(s, tmp_path / "a.spk")
        assert load_stream(tmp_path / "a.spk") == s

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 6), st.randoms(use_true_random=False))
    def test_pack_unpack_identity(self, w, h, t, r):
        dense = np.array([[[r.random() < 0.5 for _ in range(w)] for _ in range(h)] for _ in range(t)])
        s = SpikeStream.from_dense(dense)
        assert np.array_equal(s.to_dense(), dense)
        assert SpikeStream.from_dense(s.to_dense()) == s
        assert s.bits.nbytes == ((w * h + 7) // 8) * t


class TestCorruption:
    @pytest.fixture
    def data(self):
        return to_bytes(SpikeStream.from_dense(np.random.default_rng(0).random((4, 3, 5)) < 0.5))

    def test_bad_magic(self, data):
        with pytest.raises(SpikeFormatError, match="magic"):
            from_bytes(b"XXXX" + data[4:])

    def test_bad_version(self, data):
        with pytest.raises(SpikeFormatError, match="version"):
            from_bytes(data[:4] + (2).to_bytes(2, "little") + data[6:])

    def test_truncated_by_one_byte(self, data):
        with pytest.raises(SpikeCorruptionError, match=r"expected 8 bytes, got 7 \(1 missing\)"):
            from_bytes(data[:-1])

    def test_every_truncation_detected(self, data):
        for cut in range(len(data)):
            with pytest.raises(SpikeFormatError):
                from_bytes(data[:cut])

    def test_trailing_bytes(self, data):
        with pytest.raises(SpikeCorruptionError, match="trailing"):
            from_bytes(data + b"\x00")

    def test_padding_bits(self, data):
        # 15 pixels per plane leave the top bit of each plane's second byte unused
        bad = bytearray(data)
        bad[-1] |= 0x80
        with pytest.raises(SpikeCorruptionError, match="padding"):
            from_bytes(bytes(bad))

    def test_zero_dimension_header(self):
        with pytest.raises(SpikeCorruptionError, match="empty"):
            from_bytes(header_bytes(0, 3, 3))

    def test_mismatched_width_rejected(self):
        with pytest.raises(ValueError):
            SpikeStream(3, 3, 2, np.zeros((2, 5), dtype=np.uint8))


class TestSlicing:
    @pytest.fixture
    def stream(self):
        return random_stream(np.random.default_rng(9), max_t=40)[0]

    def test_identity_slice(self, stream):
        assert slice_time(stream, 0, stream.t_len) == stream

    def test_single_plane(self, stream):
        k = stream.t_len // 2
        piece = slice_time(stream, k, 1)
        assert np.array_equal(piece.to_dense()[0], stream.plane(k))

    def test_split_concat(self):
        rng = np.random.default_rng(10)
        for _ in range(30):
            s, _ = random_stream(rng, max_t=30)
            if s.t_len < 2:
                continue
            k = int(rng.integers(1, s.t_len))
            assert concat_time([slice_time(s, 0, k), slice_time(s, k, s.t_len - k)]) == s

    def test_slice_composition(self):
        rng = np.random.default_rng(11)
        s, _ = random_stream(rng, max_t=40)
        for _ in range(50):
            a = int(rng.integers(0, s.t_len))
            b = int(rng.integers(1, s.t_len - a + 1))
            c = int(rng.integers(0, b))
            d = int(rng.integers(1, b - c + 1))
            assert slice_time(slice_time(s, a, b), c, d) == slice_time(s, a + c, d)

    @pytest.mark.parametrize("start,length", [(-1, 1), (0, 0), (5, 100)])
    def test_out_of_range(self, stream, start, length):
        with pytest.raises(BoundsError):
            slice_time(stream, start, length)

    def test_plane_out_of_range(self, stream):
        with pytest.raises(BoundsError):
            stream.plane(stream.t_len)

    def test_immutable_payload(self, stream):
        with pytest.raises(ValueError):
            stream.bits[0, 0] = 1


class TestAnnotations:
    boxes = [
        BBoxAnnotation(0, 1, 10.1, 20.2, 3.3, 4.4),
        BBoxAnnotation(16, 0, 0.1 + 0.2, 1 / 3, 2.0e-7, 123456.789),
    ]

    def test_text_round_trip_exact(self):
        assert parse_annotations(format_annotations(self.boxes)) == self.boxes

    def test_file_round_trip(self, tmp_path):
        save_annotations(self.boxes, tmp_path / "a.txt")
        assert load_annotations(tmp_path / "a.txt") == self.boxes

    def test_comments_and_blank_lines(self):
        assert parse_annotations("# header\n\n3 2 1 1 1 1  # trailing\n") == [BBoxAnnotation(3, 2, 1.0, 1.0, 1.0, 1.0)]

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_annotations("1 2 3\n")

    def test_frame_alignment(self):
        out = align_frame_labels([BBoxAnnotation(3, 1, 5.0, 5.0, 2.0, 2.0)], 16)
        assert out[0].t_step == 48 and out[0].x_b == 5.0

    def test_bounds(self):
        BBoxAnnotation(0, 0, -0.5, 2.0, 2.0, 2.0).check(4, 4, 1)
        with pytest.raises(BoundsError):
            BBoxAnnotation(1, 0, 2.0, 2.0, 1.0, 1.0).check(4, 4, 1)
        with pytest.raises(BoundsError):
            BBoxAnnotation(0, 0, 10.0, 2.0, 1.0, 1.0).check(4, 4, 1)


class TestManifest:
    def test_round_trip_and_resolution(self, tmp_path):
        (tmp_path / "d").mkdir()
        save_stream(SpikeStream.from_dense(np.zeros((1, 1, 1))), tmp_path / "d" / "a.spk")
        save_annotations(TestAnnotations.boxes, tmp_path / "d" / "a.txt")
        m = DatasetManifest([ManifestEntry("d/a.spk", "d/a.txt", ("car", "pedestrian"))])
        m.save(tmp_path / "index.tsv")
        back = DatasetManifest.load(tmp_path / "index.tsv")
        assert back == m
        spk, ann = back.resolve(tmp_path, back.entries[0])
        assert load_annotations(ann) == TestAnnotations.boxes
        assert load_stream(spk).t_len == 1

    def test_missing_file(self, tmp_path):
        DatasetManifest([ManifestEntry("nope.spk", "nope.txt")]).save(tmp_path / "index.tsv")
        with pytest.raises(FileNotFoundError, match="nope.spk"):
            DatasetManifest.load(tmp_path / "index.tsv")
        assert len(DatasetManifest.load(tmp_path / "index.tsv", check=False).entries) == 1

    def test_separator_in_field(self):
        with pytest.raises(ValueError, match="separator"):
            DatasetManifest([ManifestEntry("a", "b", ("x,y",))]).dumps()
