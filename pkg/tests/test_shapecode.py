import struct
import zlib

import numpy as np
import pytest

from app.binarize import SelectedObject
from app.errors import (
    BadMagicError,
    ChecksumError,
    CodeFormatError,
    ShapeCodeError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from app.matching import fuse_codes
from app.shapecode import (
    HEADER,
    assemble,
    default_labels,
    dequantize,
    deserialize,
    layout_row,
    load_code,
    quantize,
    save_code,
    serialize,
)
from app.shapedesc import KINDS, describe


@pytest.fixture
def objects(ellipse_contour):
    """Eight distinct ellipses in template-major, rank-minor order"""
    out = []
    for j in range(8):
        contour = ellipse_contour(20 + 3 * j, 8 + j, points=120, rotate_deg=17 * j, center=(40.0 * j, 10.0))
        out.append(SelectedObject(template_index=2 + j // 2, rank=j % 2 + 1, pixels=np.zeros((0, 2), dtype=int),
                                  contour=contour, area=100 + j))
    return out


class TestQuantize:
    def test_reference_values(self):
        np.testing.assert_array_equal(quantize(np.array([0.0, 0.5, 1.0]), 8), [0, 128, 255])

    @pytest.mark.parametrize("b", [1, 4, 8, 12, 16])
    def test_error_bound(self, b):
        v = np.random.default_rng(b).random(500)
        q = quantize(v, b)
        assert q.max() <= (1 << b) - 1
        assert np.max(np.abs(dequantize(q, b) - v)) <= 0.5 / ((1 << b) - 1) + 1e-12

    @pytest.mark.parametrize("bad", [[-0.01, 0.5], [0.5, 1.01], [np.nan, 0.2]])
    def test_out_of_range(self, bad):
        with pytest.raises(ShapeCodeError):
            quantize(np.array(bad), 8)


class TestLayout:
    def test_all_positions(self):
        labels = default_labels(24)
        rows = set()
        for k, kind in enumerate(KINDS):
            for template in range(1, 5):
                for obj in range(1, 3):
                    row = layout_row(kind, template, obj)
                    assert row == 8 * k + 2 * (template - 1) + (obj - 1)
                    assert labels[row] == f"{kind}.t{template}.o{obj}"
                    rows.add(row)
        assert rows == set(range(24))

    def test_fused_labels(self):
        labels = default_labels(48)
        assert labels[0] == "VL.RVF.t1.o1"
        assert labels[24] == "NIR.RVF.t1.o1"


class TestAssemble:
    def test_default_code_size(self, objects):
        code = assemble(objects)
        assert (code.m, code.n, code.b) == (24, 100, 8)
        assert code.bits == 19200
        assert not code.degraded

    def test_fewer_samples(self, objects):
        assert assemble(objects, n=50).bits == 9600

    def test_strips_follow_layout(self, objects):
        code = assemble(objects)
        for j, obj in enumerate(objects):
            template, rank = j // 2 + 1, j % 2 + 1
            for kind, curve in zip(KINDS, describe(obj.contour)):
                np.testing.assert_array_equal(code.strips[layout_row(kind, template, rank)], quantize(curve, 8))
                np.testing.assert_array_equal(code.strip(f"{kind}.t{template}.o{rank}"), quantize(curve, 8))

    def test_deterministic(self, objects):
        assert serialize(assemble(objects)) == serialize(assemble(objects))

    def test_placeholder_marks_degraded(self, objects):
        objects[5] = SelectedObject(template_index=4, rank=2, pixels=objects[5].pixels,
                                    contour=objects[5].contour, area=9, placeholder=True)
        assert assemble(objects).degraded

    def test_wrong_object_count(self, objects):
        with pytest.raises(ShapeCodeError):
            assemble(objects[:7])


class TestSerialize:
    def test_default_size(self, random_code):
        code = random_code(np.random.default_rng(0))
        assert len(serialize(code)) == HEADER.size + 2400 + 4 == 2420

    def test_round_trip(self, random_code):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            m, n, b = int(rng.integers(1, 50)), int(rng.integers(1, 130)), int(rng.integers(1, 17))
            code = random_code(rng, m, n, b, degraded=bool(rng.integers(0, 2)))
            again = deserialize(serialize(code))
            assert again == code
            assert again.degraded == code.degraded

    @pytest.mark.parametrize("m, n, b", [(24, 50, 8), (48, 100, 8), (24, 100, 4), (12, 64, 12), (24, 100, 16)])
    def test_bit_count(self, random_code, m, n, b):
        code = random_code(np.random.default_rng(m + n + b), m, n, b)
        assert code.bits == m * n * b
        assert len(serialize(code)) == HEADER.size + m * n * (1 if b <= 8 else 2) + 4

    def test_wide_samples_take_two_bytes(self, random_code):
        code = random_code(np.random.default_rng(2), 3, 5, 12)
        assert len(serialize(code)) == HEADER.size + 3 * 5 * 2 + 4

    def test_fused_labels_rederived(self, random_code):
        rng = np.random.default_rng(3)
        fused = fuse_codes(random_code(rng), random_code(rng))
        again = deserialize(serialize(fused))
        assert again.m == 48 and again.bits == 38400
        assert again.labels == fused.labels

    def test_bad_magic(self, random_code):
        data = bytearray(serialize(random_code(np.random.default_rng(4), 2, 8)))
        data[0:4] = b"XXXX"
        with pytest.raises(BadMagicError):
            deserialize(bytes(data))

    def test_version(self, random_code):
        data = bytearray(serialize(random_code(np.random.default_rng(4), 2, 8)))
        data[4] = 2
        with pytest.raises(VersionMismatchError):
            deserialize(bytes(data))

    def test_checksum(self, random_code):
        data = bytearray(serialize(random_code(np.random.default_rng(5), 2, 8)))
        data[-1] ^= 0x01
        with pytest.raises(ChecksumError):
            deserialize(bytes(data))

    def test_truncated(self, random_code):
        data = serialize(random_code(np.random.default_rng(6), 2, 8))
        for cut in (3, HEADER.size, len(data) - 1):
            with pytest.raises(TruncatedPayloadError):
                deserialize(data[:cut])

    def test_trailing_bytes(self, random_code):
        data = serialize(random_code(np.random.default_rng(6), 2, 8))
        with pytest.raises(CodeFormatError):
            deserialize(data + b"\x00")

    def test_trailer_is_payload_crc(self, random_code):
        code = random_code(np.random.default_rng(9))
        data = serialize(code)
        payload = data[HEADER.size:-4]
        assert data[-4:] == struct.pack("<I", zlib.crc32(payload))

    def test_reads_hand_built_file(self):
        strips = np.arange(12, dtype=np.uint8).reshape(3, 4)
        payload = strips.tobytes()
        header = b"SHPC" + struct.pack("<BBHHB", 1, 1, 3, 4, 8) + bytes(5)
        code = deserialize(header + payload + struct.pack("<I", zlib.crc32(payload)))
        assert code.dims == (3, 4, 8)
        assert code.degraded
        np.testing.assert_array_equal(code.strips, strips)

    def test_header_dimensions_checked_against_length(self, random_code):
        data = bytearray(serialize(random_code(np.random.default_rng(10), 3, 5)))
        data[6] = 4  # m = 4
        with pytest.raises(TruncatedPayloadError):
            deserialize(bytes(data))

    def test_any_flipped_byte_is_rejected(self, random_code):
        data = serialize(random_code(np.random.default_rng(7), 3, 5))
        for i in range(len(data)):
            corrupted = bytearray(data)
            corrupted[i] ^= 0xFF
            with pytest.raises(CodeFormatError):
                deserialize(bytes(corrupted))

    def test_save_and_load(self, tmp_path, random_code):
        code = random_code(np.random.default_rng(8))
        path = save_code(code, str(tmp_path / "a.shpc"))
        assert load_code(path) == code

    def test_load_names_file(self, tmp_path):
        path = tmp_path / "broken.shpc"
        path.write_bytes(b"SHPC")
        with pytest.raises(TruncatedPayloadError, match="broken.shpc"):
            load_code(str(path))
