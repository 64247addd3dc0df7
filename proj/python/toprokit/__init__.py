"""Streaming attention-entropy kernels and the tri-dimensional pruning policy."""

from ._toprokit import (
    flash_attention,
    flash_attention_entropy,
    keep_probability,
    layer_score,
    low_entropy_ratio,
    naive_attention_entropy,
    normalize_entropy,
    read_tprv,
    row_reduce_xlogx,
    scale_depth,
    set_thread_count,
    ssim,
    token_tendency,
    top2_singular_values,
    write_tprv,
)

__all__ = [
    "flash_attention",
    "flash_attention_entropy",
    "keep_probability",
    "layer_score",
    "low_entropy_ratio",
    "naive_attention_entropy",
    "normalize_entropy",
    "read_tprv",
    "row_reduce_xlogx",
    "scale_depth",
    "set_thread_count",
    "ssim",
    "token_tendency",
    "top2_singular_values",
    "write_tprv",
]
