"""Classify JPEG images from the transform domain or the raw bitstream."""

from .jpeg_parser import parse_jpeg, build_huffman_decoder, destuff_scan
from .entropy import decode_scan, decode_block, extend, verify_span_tiling
from .features import (
    build_bit_features,
    build_frequency_cubes,
    dequantize_block,
    idct_block,
    inverse_zigzag,
    read_jtfx,
    write_jtfx,
)
from .models import MethodSpec, build_model, forward, predict
from .train_eval import evaluate, metrics_from_confusion, split_dataset, train

__version__ = "0.1.0"

__all__ = [
    "parse_jpeg", "build_huffman_decoder", "destuff_scan",
    "decode_scan", "decode_block", "extend", "verify_span_tiling",
    "build_bit_features", "build_frequency_cubes", "dequantize_block",
    "idct_block", "inverse_zigzag", "read_jtfx", "write_jtfx",
    "MethodSpec", "build_model", "forward", "predict",
    "evaluate", "metrics_from_confusion", "split_dataset", "train",
]
