"""NUMA-aware FFT-based convolution (nfft) and its interleaved baseline (wfft)."""

from .cgemm import BlockingParams, Schedule, cmm_execute, cmm_reference, default_blocking
from .conv import ConvConfig, TransformPlan, direct_conv, make_plan, partition_tuples
from .fft2d import dft2d_reference, fft2d_real_forward, ifft2d_real_inverse, reconstruct_full
from .numa import (
    AccessLedger,
    Interleaved,
    NumaTopology,
    OnNode,
    Placement,
    Stage,
    WorkerPool,
    allocate_region,
    locality_report,
    record_access,
    run_groups,
)
from .pipeline import convolve, fft_convolution
from .transform import inverse_transform_output, transform_input, transform_kernel

__all__ = [
    "AccessLedger", "BlockingParams", "ConvConfig", "Interleaved", "NumaTopology", "OnNode",
    "Placement", "Schedule", "Stage", "TransformPlan", "WorkerPool", "allocate_region",
    "cmm_execute", "cmm_reference", "convolve", "default_blocking", "dft2d_reference",
    "direct_conv", "fft2d_real_forward", "fft_convolution", "ifft2d_real_inverse",
    "inverse_transform_output", "locality_report", "make_plan", "partition_tuples",
    "reconstruct_full", "record_access", "run_groups", "transform_input", "transform_kernel",
]
