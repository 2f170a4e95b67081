"""Python bindings for the aisformer C++ core."""

from ._core import (
    Model,
    evaluate,
    mask_iou,
    positional_encoding,
    rle_decode,
    rle_encode,
    roi_align,
    synth_generate,
)

__all__ = [
    "Model",
    "evaluate",
    "mask_iou",
    "positional_encoding",
    "rle_decode",
    "rle_encode",
    "roi_align",
    "synth_generate",
]
