"""Feature construction from decoded coefficient grids.

Two representations feed the classifiers: dequantized frequency cubes
(one channel per zigzag index) and per-block bitstream crops (one 0/1
channel per bit position).  An IDCT path exists purely so tests can
round-trip against decoded pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .entropy import CoeffBlockGrid
from .errors import FeatureIoError
from .jpeg_parser import FrameHeader, QuantTable

KIND_TRANSFORM = 1
KIND_BITSTREAM = 2

COMPONENT_NAMES = ("Y", "U", "V")


def _make_zigzag():
    # walk the diagonals; even diagonals go up-right, odd go down-left
    order = np.empty(64, dtype=np.int64)
    k = 0
    for d in range(15):
        cells = [(i, d - i) for i in range(max(0, d - 7), min(7, d) + 1)]
        if d % 2 == 0:
            cells = cells[::-1]
        for r, c in cells:
            order[k] = r * 8 + c
            k += 1
    return order


ZIGZAG_TO_NATURAL = _make_zigzag()   # zigzag index -> row-major index


@dataclass(frozen=True)
class ImageGeometry:
    """Component pixel dimensions after padding to whole MCUs."""
    d_w0: int
    d_h0: int
    d_w1: int
    d_h1: int
    d_w2: int
    d_h2: int


@dataclass(frozen=True)
class ExtractionConfig:
    mode: str = "transform"         # transform | bitstream
    crop_width: int = 128           # bits per block for bitstream features
    quality: int = 95               # metadata only

    def __post_init__(self):
        if self.mode not in ("transform", "bitstream"):
            raise ValueError(f"unknown extraction mode {self.mode!r}")
        if self.crop_width < 1:
            raise ValueError("crop_width must be >= 1")


@dataclass
class FrequencyCubeSet:
    tensors: list                   # 3 float32 arrays [gridH, gridW, 64]
    geometry: ImageGeometry

    def element_count(self) -> int:
        return sum(t.size for t in self.tensors)


@dataclass
class BitFeatureSet:
    tensors: list                   # 3 uint8 arrays [gridH, gridW, C], entries 0/1
    crop_width: int
    truncated_count: int
    padded_count: int


def geometry_from_grid(grid: CoeffBlockGrid) -> ImageGeometry:
    dims = []
    for g in grid.components:
        dims.extend((g.grid_w * 8, g.grid_h * 8))
    return ImageGeometry(*dims)


def geometry_from_frame(frame: FrameHeader) -> ImageGeometry:
    import math
    h_max = max(c.h_sampling for c in frame.components)
    v_max = max(c.v_sampling for c in frame.components)
    mx = math.ceil(frame.width / (8 * h_max))
    my = math.ceil(frame.height / (8 * v_max))
    dims = []
    for c in frame.components:
        dims.extend((mx * c.h_sampling * 8, my * c.v_sampling * 8))
    return ImageGeometry(*dims)


def dequantize_block(coeffs: np.ndarray, table: QuantTable) -> np.ndarray:
    """Rescale quantized coefficients; output stays in zigzag order."""
    return coeffs.astype(np.float64) * np.asarray(table.values, dtype=np.float64)


def inverse_zigzag(vec) -> np.ndarray:
    """Place 64 zigzag-ordered values into their natural 8x8 positions."""
    vec = np.asarray(vec)
    out = np.empty(64, dtype=vec.dtype)
    out[ZIGZAG_TO_NATURAL] = vec
    return out.reshape(8, 8)


def build_frequency_cubes(grid: CoeffBlockGrid, tables) -> FrequencyCubeSet:
    """Dequantize every block into per-component [gridH, gridW, 64] tensors.

    ``tables`` is the per-component QuantTable sequence (Y, U, V order).
    Channel k is the dequantized coefficient at zigzag index k.
    """
    tensors = []
    for g, table in zip(grid.components, tables):
        q = np.asarray(table.values, dtype=np.float32)
        tensors.append(g.coeffs.astype(np.float32) * q)
    return FrequencyCubeSet(tensors=tensors, geometry=geometry_from_grid(grid))


def build_bit_features(grid: CoeffBlockGrid, bits: np.ndarray,
                       config: ExtractionConfig = None) -> BitFeatureSet:
    """Crop/pad each block's bit span to a fixed width feature vector."""
    if config is None:
        config = ExtractionConfig(mode="bitstream")
    c = config.crop_width
    truncated = 0
    padded = 0
    tensors = []
    for g in grid.components:
        t = np.zeros((g.grid_h, g.grid_w, c), dtype=np.uint8)
        tensors.append(t)
    for comp, gy, gx in grid.decode_order:
        g = grid.components[comp]
        start = int(g.span_start[gy, gx])
        end = int(g.span_end[gy, gx])
        n = end - start
        if n > c:
            tensors[comp][gy, gx, :] = bits[start:start + c]
            truncated += 1
        else:
            tensors[comp][gy, gx, :n] = bits[start:end]
            if n < c:
                padded += 1
    return BitFeatureSet(tensors=tensors, crop_width=c,
                         truncated_count=truncated, padded_count=padded)


def _dct_basis() -> np.ndarray:
    x = np.arange(8)
    u = np.arange(8).reshape(-1, 1)
    basis = np.cos((2 * x + 1) * u * np.pi / 16)
    basis[0] *= np.sqrt(0.5)
    return basis * np.sqrt(2.0 / 8.0)    # orthonormal rows


_BASIS = _dct_basis()


def idct_block_float(deq: np.ndarray) -> np.ndarray:
    """Inverse 8x8 DCT (orthonormal), no level shift or clamping."""
    return _BASIS.T @ np.asarray(deq, dtype=np.float64) @ _BASIS


def idct_block(deq: np.ndarray) -> np.ndarray:
    """Inverse DCT to pixel values: +128 level shift, rounded, clamped to [0,255]."""
    spatial = idct_block_float(deq) + 128.0
    return np.clip(np.round(spatial), 0, 255).astype(np.int64)


# --- JTFX feature file format ---
#
# Little-endian: magic "JTFX", u8 version=1, u8 kind (1=transform,
# 2=bitstream), u8 componentCount; then per component in Y,U,V order:
# u16 gridW, u16 gridH, u16 channels, payload (kind 1: f32, kind 2: u8),
# row-major, channel-fastest.

JTFX_MAGIC = b"JTFX"
JTFX_VERSION = 1


def write_jtfx(path, kind: int, tensors):
    if kind not in (KIND_TRANSFORM, KIND_BITSTREAM):
        raise FeatureIoError(f"unknown JTFX kind {kind}")
    with open(path, "wb") as f:
        f.write(JTFX_MAGIC)
        f.write(struct.pack("<BBB", JTFX_VERSION, kind, len(tensors)))
        for t in tensors:
            gh, gw, ch = t.shape
            f.write(struct.pack("<HHH", gw, gh, ch))
            if kind == KIND_TRANSFORM:
                f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
            else:
                f.write(np.ascontiguousarray(t, dtype=np.uint8).tobytes())


def read_jtfx(path):
    """Returns (kind, list of tensors [gridH, gridW, channels])."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise FeatureIoError(str(e)) from e
    if data[:4] != JTFX_MAGIC:
        raise FeatureIoError(f"{path}: bad magic")
    version, kind, ncomp = struct.unpack_from("<BBB", data, 4)
    if version != JTFX_VERSION:
        raise FeatureIoError(f"{path}: unsupported version {version}")
    if kind not in (KIND_TRANSFORM, KIND_BITSTREAM):
        raise FeatureIoError(f"{path}: unknown kind {kind}")
    pos = 7
    tensors = []
    for _ in range(ncomp):
        if pos + 6 > len(data):
            raise FeatureIoError(f"{path}: truncated header")
        gw, gh, ch = struct.unpack_from("<HHH", data, pos)
        pos += 6
        count = gw * gh * ch
        if kind == KIND_TRANSFORM:
            nbytes = count * 4
            if pos + nbytes > len(data):
                raise FeatureIoError(f"{path}: truncated payload")
            t = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
            t = t.astype(np.float32)
        else:
            nbytes = count
            if pos + nbytes > len(data):
                raise FeatureIoError(f"{path}: truncated payload")
            t = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos).copy()
        tensors.append(t.reshape(gh, gw, ch))
        pos += nbytes
    return kind, tensors
