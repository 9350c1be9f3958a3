"""End-to-end FFT convolution in the NUMA-aware (nfft) and baseline (wfft) variants."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cgemm import BlockingParams, Schedule, cmm_execute, default_blocking
from .conv import ConvConfig, TransformPlan, direct_conv, make_plan
from .errors import ConfigError
from .numa import AccessLedger, Interleaved, NumaTopology, Placement, WorkerPool, allocate_region
from .transform import inverse_transform_output, transform_input, transform_kernel

VARIANTS = ("direct", "wfft", "nfft")
FFT_STAGES = ("input_transform", "kernel_transform", "cmm", "output_transform")

_SCHEDULES = {
    "nfft": (Placement.NODE_PINNED, Schedule.THREE_LEVEL),
    "wfft": (Placement.INTERLEAVED, Schedule.TWO_LEVEL),
}


@dataclass
class PipelineResult:
    output: np.ndarray
    ledger: AccessLedger
    stage_seconds: dict[str, float] = field(default_factory=dict)
    plan: TransformPlan | None = None
    blocking: BlockingParams | None = None


def fft_convolution(
    I: np.ndarray,
    K: np.ndarray,
    cfg: ConvConfig,
    variant: str,
    pool: WorkerPool,
    tile: int = 16,
    lanes: int = 4,
    blocking: BlockingParams | None = None,
) -> PipelineResult:
    """Run the four stages of one variant under a fresh ledger.

    I, K and O sit in interleaved regions for both variants; only G and D
    placement and the CMM schedule differ.
    """
    if variant not in _SCHEDULES:
        raise ConfigError(f"variant must be one of {sorted(_SCHEDULES)}, got {variant!r}")
    placement, schedule = _SCHEDULES[variant]
    plan = make_plan(cfg, tile=tile, lanes=lanes, nodes=pool.nodes)
    if blocking is None:
        blocking = default_blocking(
            cfg.in_channels, cfg.out_channels, lanes=lanes, element_size=cfg.dtype.itemsize
        )
    topo = pool.topo
    ledger = AccessLedger(pool.nodes)
    es = cfg.dtype.itemsize
    regions = {
        name: allocate_region(int(np.prod(shape)) * es, Interleaved(), topo)
        for name, shape in (
            ("I", cfg.input_shape),
            ("K", cfg.kernel_shape),
            ("O", cfg.output_shape),
        )
    }

    t0 = time.perf_counter()
    D = transform_input(I, plan, placement, pool, ledger, input_region=regions["I"])
    t1 = time.perf_counter()
    G = transform_kernel(K, plan, placement, pool, ledger, kernel_region=regions["K"])
    t2 = time.perf_counter()
    Z = cmm_execute(G, D, plan, blocking, schedule, pool, ledger)
    t3 = time.perf_counter()
    O = inverse_transform_output(Z, plan, cfg, pool, ledger, output_region=regions["O"])
    t4 = time.perf_counter()
    seconds = dict(zip(FFT_STAGES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)))
    return PipelineResult(O, ledger, seconds, plan, blocking.clamped(cfg.in_channels, cfg.out_channels))


def convolve(
    I: np.ndarray,
    K: np.ndarray,
    cfg: ConvConfig,
    variant: str = "nfft",
    topo: NumaTopology | None = None,
    **kwargs,
) -> np.ndarray:
    """Convenience wrapper returning only the output tensor."""
    if variant == "direct":
        return direct_conv(I, K, cfg)
    pool = WorkerPool(topo or NumaTopology())
    return fft_convolution(I, K, cfg, variant, pool, **kwargs).output
