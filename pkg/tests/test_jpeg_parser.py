import numpy as np
import pytest
from PIL import Image

from jpegclass import jpeg_parser as jp
from jpegclass.errors import (
    BadMarkerLength,
    InvalidCode,
    MissingTable,
    StrayMarker,
    TruncatedFile,
    UnsupportedMarker,
)

from conftest import make_test_image, save_jpeg
from ref_decoder import _huff_codes

# ITU T.81 Annex K.3.1 DC luminance table
ANNEX_K_DC_LUMA_COUNTS = (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0)
ANNEX_K_DC_LUMA_SYMBOLS = tuple(range(12))


class TestParse:
    def test_q95_fixture(self, corpus_files):
        parsed = jp.parse_jpeg(corpus_files[0].read_bytes())
        assert len(parsed.quant_tables) == 2
        assert len(parsed.huff_tables) == 4
        assert parsed.frame.width == 256 and parsed.frame.height == 256
        assert parsed.scan_bytes

    def test_quant_tables_match_reference_decoder(self, corpus_files):
        from jpegclass.features import ZIGZAG_TO_NATURAL
        for path in corpus_files:
            parsed = jp.parse_jpeg(path.read_bytes())
            ref = Image.open(path).quantization   # Pillow: natural order
            for tid, values in ref.items():
                mine = parsed.quant_tables[tid].values
                assert [mine[k] for k in range(64)] == \
                    [values[ZIGZAG_TO_NATURAL[k]] for k in range(64)]

    def test_sampling_420(self, corpus_files):
        parsed = jp.parse_jpeg(corpus_files[0].read_bytes())
        assert [(c.h_sampling, c.v_sampling) for c in parsed.frame.components] == \
            [(2, 2), (1, 1), (1, 1)]

    def test_444_accepted(self, jpeg_444):
        parsed = jp.parse_jpeg(jpeg_444.read_bytes())
        assert all(c.h_sampling == c.v_sampling == 1
                   for c in parsed.frame.components)

    def test_progressive_rejected(self, tmp_path):
        rng = np.random.default_rng(0)
        p = tmp_path / "prog.jpg"
        save_jpeg(make_test_image("blobs", 64, rng), p, progressive=True)
        assert b"\xff\xc2" in p.read_bytes()
        with pytest.raises(UnsupportedMarker):
            jp.parse_jpeg(p.read_bytes())

    def test_truncated_rejected(self, corpus_files):
        data = corpus_files[0].read_bytes()
        with pytest.raises(TruncatedFile):
            jp.parse_jpeg(data[:-2])        # EOI chopped off
        with pytest.raises(TruncatedFile):
            jp.parse_jpeg(data[:200])

    def test_missing_huff_table(self, corpus_files):
        data = bytearray(corpus_files[0].read_bytes())
        # drop every DHT segment
        out = bytearray()
        i = 0
        while i < len(data):
            if data[i] == 0xFF and data[i + 1] == 0xC4:
                length = (data[i + 2] << 8) | data[i + 3]
                i += 2 + length
                continue
            out.append(data[i])
            i += 1
        with pytest.raises(MissingTable):
            jp.parse_jpeg(bytes(out))

    def test_bad_marker_length(self, corpus_files):
        data = bytearray(corpus_files[0].read_bytes())
        idx = bytes(data).find(b"\xff\xdb")
        data[idx + 2:idx + 4] = (0).to_bytes(2, "big")   # DQT length 0
        with pytest.raises(BadMarkerLength):
            jp.parse_jpeg(bytes(data))

    def test_corpus_total_over_grammar(self, corpus_files, jpeg_444,
                                       flat_gray16, odd_size_jpeg):
        for path in list(corpus_files) + [jpeg_444, flat_gray16, odd_size_jpeg]:
            jp.parse_jpeg(path.read_bytes())    # must not raise


class TestHuffman:
    def test_two_symbol_table(self):
        spec = jp.HuffmanSpec(table_class=jp.DC, id=0,
                              counts=(1, 1) + (0,) * 14, symbols=(0xA, 0xB))
        table = jp.build_huffman_decoder(spec)
        assert table.codes[0xA] == (0b0, 1)
        assert table.codes[0xB] == (0b10, 2)

    def test_annex_k_dc_luminance(self):
        spec = jp.HuffmanSpec(table_class=jp.DC, id=0,
                              counts=ANNEX_K_DC_LUMA_COUNTS,
                              symbols=ANNEX_K_DC_LUMA_SYMBOLS)
        table = jp.build_huffman_decoder(spec)
        assert table.codes[0] == (0b00, 2)
        assert table.codes[1] == (0b010, 3)

    def test_oversubscribed(self):
        spec = jp.HuffmanSpec(table_class=jp.DC, id=0,
                              counts=(3,) + (0,) * 15, symbols=(1, 2, 3))
        with pytest.raises(InvalidCode):
            jp.build_huffman_decoder(spec)

    def test_matches_independent_construction(self, corpus_files):
        parsed = jp.parse_jpeg(corpus_files[0].read_bytes())
        for spec in parsed.huff_tables.values():
            mine = jp.build_huffman_decoder(spec).codes
            ref = _huff_codes(list(spec.counts), list(spec.symbols))
            assert {(ln, code): sym for (ln, code), sym in ref.items()} == \
                {(length, code): sym for sym, (code, length) in mine.items()}

    def test_lut_consistent_with_codes(self):
        spec = jp.HuffmanSpec(table_class=jp.AC, id=0,
                              counts=ANNEX_K_DC_LUMA_COUNTS,
                              symbols=ANNEX_K_DC_LUMA_SYMBOLS)
        table = jp.build_huffman_decoder(spec)
        for sym, (code, length) in table.codes.items():
            start = code << (16 - length)
            assert table.lut_sym[start] == sym
            assert table.lut_len[start] == length


class TestDestuff:
    def test_stuffing_collapses(self):
        bits, restarts = jp.destuff_scan(bytes([0xAB, 0xFF, 0x00, 0xCD]))
        assert np.array_equal(np.packbits(bits), np.array([0xAB, 0xFF, 0xCD]))
        assert restarts == []

    def test_restart_removed(self):
        bits, restarts = jp.destuff_scan(bytes([0xAB, 0xFF, 0xD0, 0xCD]))
        assert np.array_equal(np.packbits(bits), np.array([0xAB, 0xCD]))
        assert restarts == [8]

    def test_stray_marker(self):
        with pytest.raises(StrayMarker):
            jp.destuff_scan(bytes([0xAB, 0xFF, 0xC4]))

    def test_round_trip_on_corpus(self, corpus_files, restart_jpeg):
        for path in list(corpus_files[:5]) + [restart_jpeg]:
            parsed = jp.parse_jpeg(path.read_bytes())
            bits, restarts = jp.destuff_scan(parsed.scan_bytes)
            assert jp.restuff_scan(bits, restarts) == parsed.scan_bytes
