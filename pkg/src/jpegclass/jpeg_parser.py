"""Baseline JFIF/JPEG container parsing.

Decodes the marker structure of a baseline sequential JPEG into tables,
frame geometry and the raw entropy-coded scan. Anything outside the
supported grammar (progressive, arithmetic, 12-bit, grayscale, exotic
subsampling, multi-scan) is rejected with a typed error instead of being
half-decoded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMarkerLength,
    InvalidCode,
    MissingTable,
    StrayMarker,
    TruncatedFile,
    UnsupportedMarker,
)

# Marker bytes (the second byte of the 0xFF xx pair)
SOI = 0xD8
EOI = 0xD9
SOS = 0xDA
DQT = 0xDB
DNL = 0xDC
DRI = 0xDD
DHT = 0xC4
COM = 0xFE
SOF0 = 0xC0

MARKER_NAMES = {
    0xC0: "SOF0", 0xC1: "SOF1", 0xC2: "SOF2", 0xC3: "SOF3",
    0xC5: "SOF5", 0xC6: "SOF6", 0xC7: "SOF7", 0xC9: "SOF9",
    0xCA: "SOF10", 0xCB: "SOF11", 0xCD: "SOF13", 0xCE: "SOF14",
    0xCF: "SOF15", 0xC4: "DHT", 0xCC: "DAC", 0xD8: "SOI",
    0xD9: "EOI", 0xDA: "SOS", 0xDB: "DQT", 0xDC: "DNL", 0xDD: "DRI",
    0xFE: "COM",
}
MARKER_NAMES.update({0xD0 + i: f"RST{i}" for i in range(8)})
MARKER_NAMES.update({0xE0 + i: f"APP{i}" for i in range(16)})

DC = 0
AC = 1
MAX_CODE_LEN = 16


@dataclass(frozen=True)
class QuantTable:
    id: int                 # 0..3
    precision: int          # 8 or 16 bits
    values: tuple           # 64 positive ints, zigzag order

    def __post_init__(self):
        if len(self.values) != 64 or any(v < 1 for v in self.values):
            raise BadMarkerLength(f"quant table {self.id}: need 64 values >= 1")


@dataclass(frozen=True)
class HuffmanSpec:
    table_class: int        # DC or AC
    id: int                 # 0..3
    counts: tuple           # 16 code-length counts
    symbols: tuple          # sum(counts) symbol bytes


@dataclass(frozen=True)
class FrameComponent:
    id: int
    h_sampling: int
    v_sampling: int
    quant_table_id: int


@dataclass(frozen=True)
class FrameHeader:
    width: int
    height: int
    precision: int
    components: tuple       # of FrameComponent


@dataclass(frozen=True)
class ScanComponent:
    id: int
    dc_table_id: int
    ac_table_id: int


@dataclass(frozen=True)
class ScanHeader:
    components: tuple       # of ScanComponent


@dataclass
class ParsedJpeg:
    quant_tables: dict = field(default_factory=dict)    # id -> QuantTable
    huff_tables: dict = field(default_factory=dict)     # (class, id) -> HuffmanSpec
    frame: FrameHeader = None
    scan: ScanHeader = None
    scan_bytes: bytes = b""                             # stuffing and RSTn intact
    restart_interval: int = 0                           # MCUs, 0 = none
    app_segments: list = field(default_factory=list)    # (marker byte, payload) for inspect
    marker_list: list = field(default_factory=list)     # (offset, name, length) in file order


class DecodeTable:
    """Canonical Huffman code assignment plus a 16-bit peek LUT.

    ``codes`` maps symbol -> (code value, code length).  The LUT maps any
    16-bit window whose prefix is a valid codeword to (symbol, length);
    windows matching no codeword have length 0.
    """

    def __init__(self, codes: dict):
        self.codes = codes
        self.lut_sym = np.zeros(1 << MAX_CODE_LEN, dtype=np.uint8)
        self.lut_len = np.zeros(1 << MAX_CODE_LEN, dtype=np.uint8)
        for sym, (code, length) in codes.items():
            start = code << (MAX_CODE_LEN - length)
            span = 1 << (MAX_CODE_LEN - length)
            self.lut_sym[start:start + span] = sym
            self.lut_len[start:start + span] = length


def build_huffman_decoder(spec: HuffmanSpec) -> DecodeTable:
    """Assign canonical prefix-free codes: increasing length, then symbol order."""
    codes = {}
    code = 0
    idx = 0
    for length in range(1, MAX_CODE_LEN + 1):
        n = spec.counts[length - 1]
        for _ in range(n):
            if code >= (1 << length):
                raise InvalidCode(
                    f"huffman table class={spec.table_class} id={spec.id}: "
                    f"oversubscribed at length {length}")
            codes[spec.symbols[idx]] = (code, length)
            code += 1
            idx += 1
        code <<= 1
    return DecodeTable(codes)


def destuff_scan(scan_bytes: bytes):
    """Remove byte stuffing and restart markers from the entropy-coded segment.

    Returns (bits, restarts): ``bits`` is a uint8 0/1 array of the raw
    entropy bitstream, ``restarts`` lists the bit offset immediately after
    each removed RSTn marker.
    """
    out = bytearray()
    restarts = []
    i = 0
    n = len(scan_bytes)
    while i < n:
        b = scan_bytes[i]
        if b != 0xFF:
            out.append(b)
            i += 1
            continue
        if i + 1 >= n:
            raise StrayMarker("scan ends with a lone 0xFF")
        nxt = scan_bytes[i + 1]
        if nxt == 0x00:
            out.append(0xFF)
            i += 2
        elif 0xD0 <= nxt <= 0xD7:
            restarts.append(len(out) * 8)
            i += 2
        else:
            raise StrayMarker(f"marker 0xFF{nxt:02X} inside scan")
    bits = np.unpackbits(np.frombuffer(bytes(out), dtype=np.uint8))
    return bits, restarts


def restuff_scan(bits: np.ndarray, restarts) -> bytes:
    """Inverse of destuff_scan: re-stuff 0xFF bytes and reinsert RSTn markers."""
    data = np.packbits(bits).tobytes()
    out = bytearray()
    restart_bytes = sorted(r // 8 for r in restarts)
    ri = 0
    rst_n = 0
    for pos, b in enumerate(data):
        while ri < len(restart_bytes) and restart_bytes[ri] == pos:
            out.extend((0xFF, 0xD0 + rst_n))
            rst_n = (rst_n + 1) % 8
            ri += 1
        out.append(b)
        if b == 0xFF:
            out.append(0x00)
    while ri < len(restart_bytes):
        out.extend((0xFF, 0xD0 + rst_n))
        rst_n = (rst_n + 1) % 8
        ri += 1
    return bytes(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def need(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"need {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.need(1)[0]

    def u16(self) -> int:
        chunk = self.need(2)
        return (chunk[0] << 8) | chunk[1]


def _read_segment(cur: _Cursor) -> bytes:
    length = cur.u16()
    if length < 2:
        raise BadMarkerLength(f"segment length {length} < 2")
    return cur.need(length - 2)


def _parse_dqt(payload: bytes, parsed: ParsedJpeg):
    i = 0
    while i < len(payload):
        pq, tq = payload[i] >> 4, payload[i] & 0x0F
        i += 1
        if pq not in (0, 1) or tq > 3:
            raise BadMarkerLength(f"bad DQT precision/id byte {payload[i-1]:#x}")
        width = 2 if pq else 1
        if i + 64 * width > len(payload):
            raise BadMarkerLength("DQT payload shorter than table")
        if pq:
            values = tuple(int.from_bytes(payload[i + 2 * k:i + 2 * k + 2], "big")
                           for k in range(64))
        else:
            values = tuple(payload[i:i + 64])
        i += 64 * width
        parsed.quant_tables[tq] = QuantTable(id=tq, precision=16 if pq else 8,
                                             values=values)
    if i != len(payload):
        raise BadMarkerLength("trailing bytes in DQT segment")


def _parse_dht(payload: bytes, parsed: ParsedJpeg):
    i = 0
    while i < len(payload):
        tc, th = payload[i] >> 4, payload[i] & 0x0F
        i += 1
        if tc not in (DC, AC) or th > 3:
            raise BadMarkerLength(f"bad DHT class/id byte")
        if i + 16 > len(payload):
            raise BadMarkerLength("DHT counts truncated")
        counts = tuple(payload[i:i + 16])
        i += 16
        total = sum(counts)
        if i + total > len(payload):
            raise BadMarkerLength("DHT symbols truncated")
        symbols = tuple(payload[i:i + total])
        i += total
        spec = HuffmanSpec(table_class=tc, id=th, counts=counts, symbols=symbols)
        build_huffman_decoder(spec)  # validates Kraft feasibility up front
        parsed.huff_tables[(tc, th)] = spec
    if i != len(payload):
        raise BadMarkerLength("trailing bytes in DHT segment")


def _parse_sof0(payload: bytes, parsed: ParsedJpeg):
    if len(payload) < 6:
        raise BadMarkerLength("SOF0 header too short")
    precision = payload[0]
    height = (payload[1] << 8) | payload[2]
    width = (payload[3] << 8) | payload[4]
    ncomp = payload[5]
    if precision != 8:
        raise UnsupportedMarker(f"{precision}-bit precision not supported")
    if ncomp != 3:
        raise UnsupportedMarker(f"{ncomp}-component images not supported")
    if width < 8 or height < 8:
        raise UnsupportedMarker(f"image {width}x{height} smaller than one block")
    if len(payload) != 6 + 3 * ncomp:
        raise BadMarkerLength("SOF0 payload length mismatch")
    comps = []
    for c in range(ncomp):
        cid, hv, tq = payload[6 + 3 * c], payload[7 + 3 * c], payload[8 + 3 * c]
        comps.append(FrameComponent(id=cid, h_sampling=hv >> 4,
                                    v_sampling=hv & 0x0F, quant_table_id=tq))
    sampling = tuple((c.h_sampling, c.v_sampling) for c in comps)
    if sampling not in (((2, 2), (1, 1), (1, 1)), ((1, 1), (1, 1), (1, 1))):
        raise UnsupportedMarker(f"sampling pattern {sampling} not supported "
                                "(need 4:2:0 or 4:4:4)")
    parsed.frame = FrameHeader(width=width, height=height, precision=precision,
                               components=tuple(comps))


def _parse_sos_header(payload: bytes) -> ScanHeader:
    if len(payload) < 1:
        raise BadMarkerLength("SOS header too short")
    ncomp = payload[0]
    if len(payload) != 1 + 2 * ncomp + 3:
        raise BadMarkerLength("SOS payload length mismatch")
    comps = []
    for c in range(ncomp):
        cid = payload[1 + 2 * c]
        tables = payload[2 + 2 * c]
        comps.append(ScanComponent(id=cid, dc_table_id=tables >> 4,
                                   ac_table_id=tables & 0x0F))
    return ScanHeader(components=tuple(comps))


def _capture_scan(cur: _Cursor) -> bytes:
    """Grab entropy-coded bytes verbatim until the EOI marker."""
    data, start = cur.data, cur.pos
    i = start
    while True:
        if i + 1 >= len(data):
            raise TruncatedFile("scan ended without EOI")
        if data[i] != 0xFF:
            i += 1
            continue
        nxt = data[i + 1]
        if nxt == 0x00 or 0xD0 <= nxt <= 0xD7:
            i += 2
            continue
        if nxt == EOI:
            cur.pos = i + 2
            return data[start:i]
        if nxt == SOS or nxt == DNL:
            raise UnsupportedMarker(f"multi-scan/DNL file ({MARKER_NAMES.get(nxt, hex(nxt))})")
        raise StrayMarker(f"marker 0xFF{nxt:02X} inside scan")


def parse_jpeg(data: bytes) -> ParsedJpeg:
    """Parse a complete baseline JPEG file image into its structural parts."""
    cur = _Cursor(data)
    if cur.u16() != 0xFFD8:
        raise TruncatedFile("file does not start with SOI")
    parsed = ParsedJpeg()
    parsed.marker_list.append((0, "SOI", 0))

    while True:
        offset = cur.pos
        b = cur.u8()
        if b != 0xFF:
            raise BadMarkerLength(f"expected marker at offset {offset}, got {b:#x}")
        marker = cur.u8()
        while marker == 0xFF:   # fill bytes are legal between segments
            marker = cur.u8()
        name = MARKER_NAMES.get(marker, f"0x{marker:02X}")

        if marker == DQT:
            payload = _read_segment(cur)
            _parse_dqt(payload, parsed)
        elif marker == DHT:
            payload = _read_segment(cur)
            _parse_dht(payload, parsed)
        elif marker == SOF0:
            payload = _read_segment(cur)
            _parse_sof0(payload, parsed)
        elif marker in (0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7,
                        0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF, 0xCC):
            raise UnsupportedMarker(f"{name} frames not supported (baseline SOF0 only)")
        elif marker == DRI:
            payload = _read_segment(cur)
            if len(payload) != 2:
                raise BadMarkerLength("DRI payload must be 2 bytes")
            parsed.restart_interval = (payload[0] << 8) | payload[1]
        elif marker == DNL:
            raise UnsupportedMarker("DNL not supported")
        elif (0xE0 <= marker <= 0xEF) or marker == COM:
            payload = _read_segment(cur)
            if 0xE0 <= marker <= 0xEF:
                parsed.app_segments.append((marker, payload))
        elif marker == SOS:
            payload = _read_segment(cur)
            parsed.scan = _parse_sos_header(payload)
            parsed.marker_list.append((offset, "SOS", len(payload) + 2))
            parsed.scan_bytes = _capture_scan(cur)
            parsed.marker_list.append((cur.pos - 2, "EOI", 0))
            break
        elif marker == EOI:
            raise TruncatedFile("EOI before any scan data")
        else:
            raise UnsupportedMarker(f"unexpected marker {name}")
        parsed.marker_list.insert(len(parsed.marker_list), (offset, name, cur.pos - offset))

    _check_cross_references(parsed)
    return parsed


def _check_cross_references(parsed: ParsedJpeg):
    if parsed.frame is None:
        raise TruncatedFile("no SOF0 frame header before SOS")
    if not parsed.scan_bytes:
        raise TruncatedFile("empty scan")
    for comp in parsed.frame.components:
        if comp.quant_table_id not in parsed.quant_tables:
            raise MissingTable(f"component {comp.id} references "
                               f"undefined quant table {comp.quant_table_id}")
    frame_ids = {c.id for c in parsed.frame.components}
    for sc in parsed.scan.components:
        if sc.id not in frame_ids:
            raise MissingTable(f"scan component {sc.id} not in frame")
        if (DC, sc.dc_table_id) not in parsed.huff_tables:
            raise MissingTable(f"component {sc.id}: undefined DC table {sc.dc_table_id}")
        if (AC, sc.ac_table_id) not in parsed.huff_tables:
            raise MissingTable(f"component {sc.id}: undefined AC table {sc.ac_table_id}")


def is_420(frame: FrameHeader) -> bool:
    return frame.components[0].h_sampling == 2
