"""Huffman entropy decoding of the scan into coefficient block grids.

Every 8x8 block gets both its 64 quantized coefficients (zigzag order,
DC already un-differenced) and the exact bit span it occupies in the
destuffed bitstream.  The spans are what make bitstream features
possible: a block's feature vector is literally the bits of its span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BitstreamExhausted, CoefficientOverrun, InvalidHuffmanCode
from .jpeg_parser import AC, DC, DecodeTable, ParsedJpeg, build_huffman_decoder, destuff_scan

EOB_SYMBOL = 0x00
ZRL_SYMBOL = 0xF0


@dataclass
class CoeffBlock:
    coeffs: np.ndarray      # 64 ints, zigzag order
    component: int          # 0=Y, 1=U, 2=V
    grid_x: int
    grid_y: int


@dataclass
class BlockBitSpan:
    start_bit: int          # half-open [start_bit, end_bit)
    end_bit: int
    component: int
    grid_x: int
    grid_y: int
    has_explicit_eob: bool


class ComponentGrid:
    """Dense per-component block storage (row-major, padded to MCU multiples)."""

    def __init__(self, grid_w: int, grid_h: int):
        self.grid_w = grid_w
        self.grid_h = grid_h
        self.coeffs = np.zeros((grid_h, grid_w, 64), dtype=np.int32)
        self.span_start = np.zeros((grid_h, grid_w), dtype=np.int64)
        self.span_end = np.zeros((grid_h, grid_w), dtype=np.int64)
        self.has_eob = np.zeros((grid_h, grid_w), dtype=bool)

    def block(self, grid_x: int, grid_y: int) -> CoeffBlock:
        return CoeffBlock(coeffs=self.coeffs[grid_y, grid_x].copy(),
                          component=-1, grid_x=grid_x, grid_y=grid_y)


class CoeffBlockGrid:
    """All three component grids plus the decode-order span sequence."""

    def __init__(self, components, decode_order):
        self.components = components        # list of 3 ComponentGrid
        self.decode_order = decode_order    # [(comp, grid_y, grid_x)] in scan order

    def spans(self):
        """Yield BlockBitSpan in decode order."""
        for comp, gy, gx in self.decode_order:
            g = self.components[comp]
            yield BlockBitSpan(start_bit=int(g.span_start[gy, gx]),
                               end_bit=int(g.span_end[gy, gx]),
                               component=comp, grid_x=gx, grid_y=gy,
                               has_explicit_eob=bool(g.has_eob[gy, gx]))


class BitReader:
    """MSB-first cursor over the destuffed entropy bytes."""

    def __init__(self, data: bytes, nbits: int | None = None):
        self.data = data
        self.nbits = len(data) * 8 if nbits is None else nbits
        self.pos = 0

    def _window(self) -> int:
        byte_idx = self.pos >> 3
        chunk = self.data[byte_idx:byte_idx + 4]
        if len(chunk) < 4:
            chunk = chunk + b"\xff" * (4 - len(chunk))
        return int.from_bytes(chunk, "big")

    def peek16(self) -> int:
        return (self._window() >> (16 - (self.pos & 7))) & 0xFFFF

    def read_bits(self, n: int) -> int:
        if n == 0:
            return 0
        if self.pos + n > self.nbits:
            raise BitstreamExhausted(f"need {n} bits at bit {self.pos}")
        val = (self._window() >> (32 - (self.pos & 7) - n)) & ((1 << n) - 1)
        self.pos += n
        return val

    def decode_symbol(self, table: DecodeTable) -> int:
        if self.pos >= self.nbits:
            raise BitstreamExhausted(f"stream ended at bit {self.pos}")
        v = self.peek16()
        length = int(table.lut_len[v])
        if length == 0:
            raise InvalidHuffmanCode(f"no codeword matches bits at {self.pos}")
        if self.pos + length > self.nbits:
            raise BitstreamExhausted(f"codeword overruns stream at bit {self.pos}")
        self.pos += length
        return int(table.lut_sym[v])


def extend(raw_bits: int, s: int) -> int:
    """JPEG sign extension: map an s-bit magnitude code to its signed value."""
    if s == 0:
        return 0
    if raw_bits >= (1 << (s - 1)):
        return raw_bits
    return raw_bits - ((1 << s) - 1)


def decode_block(reader: BitReader, dc_table: DecodeTable, ac_table: DecodeTable,
                 dc_pred: int):
    """Decode one 8x8 block starting at the cursor.

    Returns (coeffs[64] zigzag, new dc predictor, start_bit, end_bit,
    has_explicit_eob).  The span runs from the first DC code bit through
    the last consumed bit, EOB included when present.
    """
    start = reader.pos
    coeffs = np.zeros(64, dtype=np.int32)

    s = reader.decode_symbol(dc_table)
    if s > 15:
        raise InvalidHuffmanCode(f"DC category {s} out of range")
    dc_val = dc_pred + extend(reader.read_bits(s), s)
    coeffs[0] = dc_val

    k = 1
    has_eob = False
    while k <= 63:
        rs = reader.decode_symbol(ac_table)
        run, size = rs >> 4, rs & 0x0F
        if size == 0:
            if rs == EOB_SYMBOL:
                has_eob = True
                break
            if rs == ZRL_SYMBOL:
                k += 16
                if k > 64:
                    raise CoefficientOverrun(f"ZRL past index 63 (k={k})")
                continue
            raise InvalidHuffmanCode(f"undefined AC symbol {rs:#04x}")
        k += run
        if k > 63:
            raise CoefficientOverrun(f"AC run past index 63 (k={k})")
        coeffs[k] = extend(reader.read_bits(size), size)
        k += 1

    return coeffs, dc_val, start, reader.pos, has_eob


def decode_scan(parsed: ParsedJpeg) -> CoeffBlockGrid:
    """Decode the interleaved scan of a parsed baseline JPEG."""
    bits, restarts = destuff_scan(parsed.scan_bytes)
    reader = BitReader(np.packbits(bits).tobytes(), len(bits))

    frame = parsed.frame
    comps = frame.components
    h_max = max(c.h_sampling for c in comps)
    v_max = max(c.v_sampling for c in comps)
    mcus_x = math.ceil(frame.width / (8 * h_max))
    mcus_y = math.ceil(frame.height / (8 * v_max))

    grids = [ComponentGrid(mcus_x * c.h_sampling, mcus_y * c.v_sampling)
             for c in comps]

    scan_by_id = {sc.id: sc for sc in parsed.scan.components}
    tables = []
    for c in comps:
        sc = scan_by_id[c.id]
        tables.append((build_huffman_decoder(parsed.huff_tables[(DC, sc.dc_table_id)]),
                       build_huffman_decoder(parsed.huff_tables[(AC, sc.ac_table_id)])))

    dc_pred = [0, 0, 0]
    decode_order = []
    interval = parsed.restart_interval
    n_mcus = mcus_x * mcus_y

    for m in range(n_mcus):
        if interval and m > 0 and m % interval == 0:
            ri = m // interval - 1
            if ri >= len(restarts):
                raise BitstreamExhausted(f"missing restart marker before MCU {m}")
            reader.pos = restarts[ri]
            dc_pred = [0, 0, 0]
        mcu_y, mcu_x = divmod(m, mcus_x)
        for ci, c in enumerate(comps):
            dc_t, ac_t = tables[ci]
            for by in range(c.v_sampling):
                for bx in range(c.h_sampling):
                    coeffs, dc_pred[ci], start, end, eob = decode_block(
                        reader, dc_t, ac_t, dc_pred[ci])
                    gy = mcu_y * c.v_sampling + by
                    gx = mcu_x * c.h_sampling + bx
                    g = grids[ci]
                    g.coeffs[gy, gx] = coeffs
                    g.span_start[gy, gx] = start
                    g.span_end[gy, gx] = end
                    g.has_eob[gy, gx] = eob
                    decode_order.append((ci, gy, gx))

    return CoeffBlockGrid(grids, decode_order)


class TilingReport:
    """Truthy verdict of a span-tiling check with a first-violation message."""

    def __init__(self, ok: bool, reason: str = ""):
        self.ok = ok
        self.reason = reason

    def __bool__(self) -> bool:
        return self.ok

    def __repr__(self) -> str:
        return f"TilingReport(ok={self.ok}, reason={self.reason!r})"


def verify_span_tiling(grid: CoeffBlockGrid, bits: np.ndarray, restarts) -> TilingReport:
    """Check that spans in decode order exactly tile the bitstream.

    Gaps are tolerated only as byte-alignment padding (< 8 bits, all 1s)
    immediately before a recorded restart offset or at stream end.
    """
    restart_set = set(restarts)
    expected = 0
    for span in grid.spans():
        if span.start_bit >= span.end_bit:
            return TilingReport(False, f"empty/inverted span at {span}")
        if span.start_bit < expected:
            return TilingReport(
                False, f"overlap: span starts at {span.start_bit}, expected {expected}")
        if span.start_bit > expected:
            gap = span.start_bit - expected
            if span.start_bit not in restart_set:
                return TilingReport(
                    False, f"gap [{expected},{span.start_bit}) not at a restart")
            if gap >= 8 or not np.all(bits[expected:span.start_bit] == 1):
                return TilingReport(
                    False, f"bad padding in gap [{expected},{span.start_bit})")
        expected = span.end_bit
    total = len(bits)
    if expected > total:
        return TilingReport(False, f"spans overrun stream: {expected} > {total}")
    if expected < total:
        gap = total - expected
        if gap >= 8 or not np.all(bits[expected:total] == 1):
            return TilingReport(False, f"bad terminal padding [{expected},{total})")
    return TilingReport(True)
