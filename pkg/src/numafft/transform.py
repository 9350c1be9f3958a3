"""Input and kernel transforms with NUMA-aware tuple scatter, and the gathered inverse transform.

Packed operands are tuple-major so the CMM walks them with unit stride:

* D: ``[t][c][m][re 0..L-1 | im 0..L-1]``
* G: ``[t][c][c'][re 0..L-1 | im 0..L-1]`` (kernel spectra stored conjugated)
* Z: ``[t][c'][m][re 0..L-1 | im 0..L-1]``

Under node-pinned placement the tuple axis is cut along ``plan.node_ranges``
and block ``n`` lives in a region on node ``n``. Interleaved placement keeps a
single block whose pages are spread round-robin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import ConvConfig, TransformPlan, check_tensor
from .errors import ConfigError
from .fft2d import fft2d_real_forward, ifft2d_real_inverse
from .numa import (
    AccessLedger,
    Interleaved,
    NumaTopology,
    OnNode,
    Placement,
    Region,
    Stage,
    Worker,
    WorkerPool,
    allocate_region,
    run_shared,
)


@dataclass
class PackedOperand:
    kind: str
    placement: Placement
    plan: TransformPlan
    blocks: list[np.ndarray]
    regions: list[Region | None]
    ranges: list[range]

    def locate(self, t: int) -> tuple[int, int]:
        """``(block, local tuple index)`` holding tuple ``t``."""
        for i, r in enumerate(self.ranges):
            if t in r:
                return i, t - r.start
        raise IndexError(f"tuple {t} not stored in operand {self.kind}")

    def tuple_major(self) -> np.ndarray:
        """All blocks concatenated back into one ``[t][c][x][2L]`` array."""
        return np.concatenate(self.blocks, axis=0)

    def tuple_complex(self, t: int) -> np.ndarray:
        """Tuple ``t`` as a complex ``(c, x, L)`` array."""
        b, k = self.locate(t)
        return _to_complex(self.blocks[b][k], self.plan.lanes)

    @property
    def nbytes(self) -> int:
        return sum(b.nbytes for b in self.blocks)


@dataclass
class ProductTensor:
    plan: TransformPlan
    data: np.ndarray
    region: Region

    def tuple_complex(self, t: int) -> np.ndarray:
        """Tuple ``t`` as a complex ``(c', m, L)`` array."""
        return _to_complex(self.data[t], self.plan.lanes)


def _to_complex(packed: np.ndarray, lanes: int) -> np.ndarray:
    ctype = np.complex64 if packed.dtype == np.float32 else np.complex128
    out = np.empty(packed.shape[:-1] + (lanes,), dtype=ctype)
    out.real = packed[..., :lanes]
    out.imag = packed[..., lanes:]
    return out


def default_pool(plan: TransformPlan) -> WorkerPool:
    return WorkerPool(NumaTopology(nodes=plan.nodes, cores_per_node=1))


def _check_pool(plan: TransformPlan, pool: WorkerPool) -> None:
    if pool.nodes != plan.nodes:
        raise ConfigError(f"plan is for {plan.nodes} nodes but pool has {pool.nodes}")


def allocate_operand(
    kind: str,
    plan: TransformPlan,
    placement: Placement,
    inner: int,
    topo: NumaTopology,
) -> PackedOperand:
    """Zeroed ``[t][C][inner][2L]`` storage laid out per ``placement``."""
    cfg = plan.cfg
    if not isinstance(placement, Placement):
        raise ConfigError(f"unknown placement {placement!r}")
    if placement is Placement.NODE_PINNED:
        ranges = list(plan.node_ranges)
        policies = [OnNode(n) for n in range(plan.nodes)]
    else:
        ranges = [range(0, plan.tuple_count)]
        policies = [Interleaved()]
    blocks, regions = [], []
    for r, policy in zip(ranges, policies):
        block = np.zeros((len(r), cfg.in_channels, inner, 2 * plan.lanes), dtype=cfg.dtype)
        blocks.append(block)
        regions.append(allocate_region(block.nbytes, policy, topo) if block.size else None)
    return PackedOperand(kind, placement, plan, blocks, regions, ranges)


def transform_input(
    I: np.ndarray,
    plan: TransformPlan,
    placement: Placement,
    pool: WorkerPool | None = None,
    ledger: AccessLedger | None = None,
    input_region: Region | None = None,
) -> PackedOperand:
    """Tile, transform and scatter the input feature maps into D.

    One task per ``(b, c)`` feature map; tasks go to all workers through a
    shared queue since the reads of I are remote no matter who runs them.
    """
    cfg = plan.cfg
    check_tensor(I, cfg.input_shape, "input")
    pool = pool or default_pool(plan)
    _check_pool(plan, pool)
    topo = pool.topo
    I = np.ascontiguousarray(I, dtype=cfg.dtype)
    D = allocate_operand("D", plan, placement, plan.m_count, topo)
    if input_region is None:
        input_region = allocate_region(I.nbytes, Interleaved(), topo)

    d, to, L = plan.tile, plan.out_tile, plan.lanes
    X, Dx, XD, M = plan.tiles_y, plan.tiles_x, plan.tiles_per_map, plan.m_count
    C, H, W, p = cfg.in_channels, cfg.in_height, cfg.in_width, cfg.pad
    es = I.itemsize
    rows = (X - 1) * to + d
    cols = (Dx - 1) * to + d
    fetch_offsets, fetch_lengths = _patch_extents(plan)

    def task(worker: Worker, b: int, c: int) -> None:
        plane = np.zeros((rows, cols), dtype=cfg.dtype)
        plane[p : p + H, p : p + W] = I[b, c]
        windows = np.lib.stride_tricks.sliding_window_view(plane, (d, d))
        patches = windows[::to, ::to][:X, :Dx]
        spec = fft2d_real_forward(patches).reshape(XD, plan.tuple_count, L)
        spec = spec.transpose(1, 0, 2)
        m0 = b * XD
        for block, r, region in zip(D.blocks, D.ranges, D.regions):
            if not len(r):
                continue
            sub = spec[r.start : r.stop]
            block[:, c, m0 : m0 + XD, :L] = sub.real
            block[:, c, m0 : m0 + XD, L:] = sub.imag
            offsets = ((np.arange(len(r)) * C + c) * M + m0) * 2 * L * es
            worker.record(region, offsets, XD * 2 * L * es, Stage.INPUT_STORE)
        base = (b * C + c) * H * W * es
        worker.record(input_region, base + fetch_offsets, fetch_lengths, Stage.INPUT_FETCH)

    tasks = [
        (lambda w, b=b, c=c: task(w, b, c)) for b in range(cfg.batch) for c in range(C)
    ]
    run_shared(pool, tasks, ledger)
    return D


def _patch_extents(plan: TransformPlan) -> tuple[np.ndarray, np.ndarray]:
    """Byte extents of one feature map read by all its tile patches (row segments)."""
    cfg = plan.cfg
    H, W, p = cfg.in_height, cfg.in_width, cfg.pad
    es = cfg.dtype.itemsize
    offsets, lengths = [], []
    for alpha in range(plan.tiles_y):
        h0 = max(alpha * plan.out_tile - p, 0)
        h1 = min(alpha * plan.out_tile - p + plan.tile, H)
        for beta in range(plan.tiles_x):
            w0 = max(beta * plan.out_tile - p, 0)
            w1 = min(beta * plan.out_tile - p + plan.tile, W)
            if h1 <= h0 or w1 <= w0:
                continue
            hs = np.arange(h0, h1)
            offsets.append((hs * W + w0) * es)
            lengths.append(np.full(hs.shape, (w1 - w0) * es))
    if not offsets:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(offsets).astype(np.int64), np.concatenate(lengths).astype(np.int64)


def transform_kernel(
    K: np.ndarray,
    plan: TransformPlan,
    placement: Placement,
    pool: WorkerPool | None = None,
    ledger: AccessLedger | None = None,
    kernel_region: Region | None = None,
) -> PackedOperand:
    """Zero-pad each kernel top-left to a tile, transform, conjugate and scatter into G."""
    cfg = plan.cfg
    check_tensor(K, cfg.kernel_shape, "kernel")
    pool = pool or default_pool(plan)
    _check_pool(plan, pool)
    topo = pool.topo
    K = np.ascontiguousarray(K, dtype=cfg.dtype)
    G = allocate_operand("G", plan, placement, cfg.out_channels, topo)
    if kernel_region is None:
        kernel_region = allocate_region(K.nbytes, Interleaved(), topo)

    d, L = plan.tile, plan.lanes
    C, Cp = cfg.in_channels, cfg.out_channels
    hk, wk = cfg.kernel_height, cfg.kernel_width
    es = K.itemsize

    def task(worker: Worker, cp: int) -> None:
        padded = np.zeros((C, d, d), dtype=cfg.dtype)
        padded[:, :hk, :wk] = K[cp]
        spec = np.conj(fft2d_real_forward(padded)).reshape(C, plan.tuple_count, L)
        spec = spec.transpose(1, 0, 2)
        for block, r, region in zip(G.blocks, G.ranges, G.regions):
            if not len(r):
                continue
            sub = spec[r.start : r.stop]
            block[:, :, cp, :L] = sub.real
            block[:, :, cp, L:] = sub.imag
            tc = np.arange(len(r) * C)
            worker.record(region, (tc * Cp + cp) * 2 * L * es, 2 * L * es, Stage.KERNEL_STORE)
        worker.record(kernel_region, [cp * C * hk * wk * es], C * hk * wk * es, Stage.KERNEL_FETCH)

    run_shared(pool, [(lambda w, cp=cp: task(w, cp)) for cp in range(Cp)], ledger)
    return G


def allocate_product(plan: TransformPlan, topo: NumaTopology) -> ProductTensor:
    cfg = plan.cfg
    data = np.zeros(
        (plan.tuple_count, cfg.out_channels, plan.m_count, 2 * plan.lanes), dtype=cfg.dtype
    )
    return ProductTensor(plan, data, allocate_region(data.nbytes, Interleaved(), topo))


def inverse_transform_output(
    Z: ProductTensor,
    plan: TransformPlan,
    cfg: ConvConfig | None = None,
    pool: WorkerPool | None = None,
    ledger: AccessLedger | None = None,
    output_region: Region | None = None,
) -> np.ndarray:
    """Gather every tile's tuples from Z, invert, and write the clipped valid region to O."""
    cfg = cfg or plan.cfg
    if cfg != plan.cfg:
        raise ConfigError("configuration does not match the plan")
    pool = pool or default_pool(plan)
    _check_pool(plan, pool)
    topo = pool.topo
    O = np.zeros(cfg.output_shape, dtype=cfg.dtype)
    if output_region is None:
        output_region = allocate_region(O.nbytes, Interleaved(), topo)

    d, to, L = plan.tile, plan.out_tile, plan.lanes
    X, Dx, XD, M = plan.tiles_y, plan.tiles_x, plan.tiles_per_map, plan.m_count
    Cp, Ho, Wo = cfg.out_channels, cfg.out_height, cfg.out_width
    es = O.itemsize
    t_idx = np.arange(plan.tuple_count)
    ctype = cfg.complex_dtype

    def task(worker: Worker, b: int, cp: int) -> None:
        m0 = b * XD
        slab = Z.data[:, cp, m0 : m0 + XD, :]
        worker.record(
            Z.region, ((t_idx * Cp + cp) * M + m0) * 2 * L * es, XD * 2 * L * es, Stage.OUTPUT_FETCH
        )
        spec = np.empty((plan.tuple_count, XD, L), dtype=ctype)
        spec.real = slab[..., :L]
        spec.imag = slab[..., L:]
        spec = spec.transpose(1, 0, 2).reshape(X, Dx, d // 2 + 1, d)
        tiles = ifft2d_real_inverse(spec)[..., :to, :to]
        plane = tiles.transpose(0, 2, 1, 3).reshape(X * to, Dx * to)
        O[b, cp] = plane[:Ho, :Wo]
        rows = np.arange(Ho)
        worker.record(
            output_region, ((b * Cp + cp) * Ho + rows) * Wo * es, Wo * es, Stage.OUTPUT_STORE
        )

    tasks = [
        (lambda w, b=b, cp=cp: task(w, b, cp)) for b in range(cfg.batch) for cp in range(Cp)
    ]
    run_shared(pool, tasks, ledger)
    return O
