"""Streamed tiled GEMM engine and Darknet CNN runtime."""

from ._core import (
    Network,
    StreamGemmError,
    estimate,
    gemm_reference,
    gemm_streamed,
    presets,
)

__all__ = [
    "Network",
    "StreamGemmError",
    "estimate",
    "gemm_reference",
    "gemm_streamed",
    "presets",
]
