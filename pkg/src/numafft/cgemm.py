"""Batched complex matrix multiplication ``Z[t] = G[t] @ D[t]`` over frequency tuples.

Every tuple holds ``L`` independent complex products (one per lane). The
three-level schedule gives each node its own tuple range and the node's
workers split the ``(cs', bs, mu)`` loops. The two-level baseline collapses
``(t, cs', bs, mu)`` into one iteration space cut into contiguous static
chunks, one per worker, regardless of the worker's node.

Loop nest per node (outer to inner)::

    t in node range
      cs  in 0..C  step C_l1
        cs' in 0..C' step C'_l2     -+
          bs in 0..B step B_r        | split across the node's workers
            mu in 0..X*Delta        -+
              cofs' in cs'..cs'+C'_l2 step C'_r
                micro-kernel over c in cs..cs+C_l1

Rows of a micro-tile are ``m = (bs + r) * X * Delta + mu`` for ``r < B_r``.
A cell's accumulator survives across ``cs`` blocks and is written to Z once,
after the last block.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from .conv import TransformPlan
from .errors import ConfigError
from .numa import AccessLedger, Placement, Stage, Worker, WorkerPool, run_groups, run_shared, tally
from .transform import PackedOperand, ProductTensor, allocate_product

TRACE_G, TRACE_D, TRACE_Z = 0, 1, 2


class Schedule(enum.Enum):
    THREE_LEVEL = "three-level"
    TWO_LEVEL = "two-level"


@dataclass(frozen=True)
class BlockingParams:
    b_r: int = 4
    cp_r: int = 2
    c_l1: int = 64
    cp_l2: int = 512

    def __post_init__(self):
        if min(self.b_r, self.cp_r, self.c_l1, self.cp_l2) < 1:
            raise ConfigError(f"block sizes must be >= 1: {self}")

    def clamped(self, c: int, cp: int) -> "BlockingParams":
        """Fit the blocks to a ``C x C'`` problem, keeping ``C'_r | C'_l2``."""
        cp_r = min(self.cp_r, cp)
        cp_l2 = min(self.cp_l2, cp)
        cp_l2 = max(cp_r, cp_l2 - cp_l2 % cp_r)
        return BlockingParams(self.b_r, cp_r, min(self.c_l1, c), cp_l2)


def default_blocking(
    c: int,
    cp: int,
    cache_l1: int = 32 * 1024,
    cache_l2: int = 2 * 1024 * 1024,
    lanes: int = 4,
    element_size: int = 4,
) -> BlockingParams:
    """Register blocks 4x2; C_l1 and C'_l2 sized so the panels fill half of L1 / L2.

    Among the multiples of 8 that fit, a divisor of ``C`` is preferred so the
    last C block is not a remainder.
    """
    b_r, cp_r = 4, 2
    group = 2 * lanes * element_size
    l1_fit = (cache_l1 // 2) // ((b_r + cp_r) * group)
    fits = list(range(8, l1_fit + 1, 8))
    dividing = [x for x in fits if c % x == 0]
    c_l1 = (dividing or fits or [8])[-1]
    c_l1 = max(min(c_l1, c), min(8, c))

    cp_r = min(cp_r, cp)
    l2_fit = (cache_l2 // 2) // (c_l1 * group)
    cp_l2 = max(cp_r, l2_fit - l2_fit % cp_r)
    cp_l2 = min(cp_l2, cp)
    cp_l2 = max(cp_r, cp_l2 - cp_l2 % cp_r)
    return BlockingParams(b_r, cp_r, c_l1, cp_l2)


def cmm_reference(G_t: np.ndarray, D_t: np.ndarray) -> np.ndarray:
    """Unblocked ``C' x C`` by ``C x M`` complex product, accumulated in complex128."""
    G_t = np.asarray(G_t)
    D_t = np.asarray(D_t)
    if G_t.ndim != 2 or D_t.ndim != 2 or G_t.shape[1] != D_t.shape[0]:
        raise ConfigError(f"cannot multiply {G_t.shape} by {D_t.shape}")
    Z = np.zeros((G_t.shape[0], D_t.shape[1]), dtype=np.complex128)
    for c in range(G_t.shape[1]):
        Z += np.multiply.outer(G_t[:, c].astype(np.complex128), D_t[c].astype(np.complex128))
    return Z


@numba.njit(cache=True, nogil=True)
def cmm_micro_kernel(g_panel, d_panel, acc, c_extent):
    """``acc[r, s] += sum_c g[c, s] * d[c, r]`` lane-wise on ``[re L | im L]`` groups.

    Shapes: ``g_panel (c, C'_r, 2L)``, ``d_panel (c, B_r, 2L)``, ``acc (B_r, C'_r, 2L)``.
    """
    lanes = acc.shape[2] // 2
    for c in range(c_extent):
        for r in range(acc.shape[0]):
            for s in range(acc.shape[1]):
                for l in range(lanes):
                    gr = g_panel[c, s, l]
                    gi = g_panel[c, s, lanes + l]
                    dr = d_panel[c, r, l]
                    di = d_panel[c, r, lanes + l]
                    acc[r, s, l] += gr * dr - gi * di
                    acc[r, s, lanes + l] += gr * di + gi * dr


@numba.njit(cache=True, nogil=True)
def _trace(trace, trace_len, kind, offset):
    i = trace_len[0]
    if i < trace.shape[0]:
        trace[i, 0] = kind
        trace[i, 1] = offset
    trace_len[0] = i + 1


@numba.njit(cache=True, nogil=True)
def _cell_block(
    Gb, Db, tl, cs, ce, csp, bs, mu, tiles, batch, cout, acc_cell,
    exec_node, g_meta, d_meta, nodes, page_size, es, fetch, trace, trace_len,
):
    """All ``cofs'`` micro-kernels of one cell for one C block."""
    group = Gb.shape[3]
    cin = Gb.shape[1]
    m_count = batch * tiles
    bre = min(acc_cell.shape[1], batch - bs)
    cend = min(csp + acc_cell.shape[2] * acc_cell.shape[0], cout)
    m0 = bs * tiles + mu
    j = 0
    for cofs in range(csp, cend, acc_cell.shape[2]):
        cre = min(acc_cell.shape[2], cend - cofs)
        acc = acc_cell[j, :bre, :cre, :]
        if cs == 0:
            acc[:] = 0
        for c in range(cs, cs + ce):
            off = ((tl * cin + c) * cout + cofs) * group * es
            tally(fetch, exec_node, g_meta[0], nodes, page_size, g_meta[1], off, cre * group * es)
            if trace.shape[0] > 0:
                _trace(trace, trace_len, 0, off)
            for r in range(bre):
                off = ((tl * cin + c) * m_count + m0 + r * tiles) * group * es
                tally(fetch, exec_node, d_meta[0], nodes, page_size, d_meta[1], off, group * es)
                if trace.shape[0] > 0:
                    _trace(trace, trace_len, 1, off)
        g_panel = Gb[tl, cs : cs + ce, cofs : cofs + cre, :]
        d_panel = Db[tl, cs : cs + ce, m0 : m0 + (bre - 1) * tiles + 1 : tiles, :]
        cmm_micro_kernel(g_panel, d_panel, acc, ce)
        j += 1


@numba.njit(cache=True, nogil=True)
def _store_cell(
    Z, t, csp, bs, mu, tiles, batch, acc_cell,
    exec_node, z_meta, nodes, page_size, es, store, trace, trace_len,
):
    group = Z.shape[3]
    cout = Z.shape[1]
    m_count = Z.shape[2]
    bre = min(acc_cell.shape[1], batch - bs)
    cend = min(csp + acc_cell.shape[2] * acc_cell.shape[0], cout)
    m0 = bs * tiles + mu
    j = 0
    for cofs in range(csp, cend, acc_cell.shape[2]):
        cre = min(acc_cell.shape[2], cend - cofs)
        for r in range(bre):
            for s in range(cre):
                Z[t, cofs + s, m0 + r * tiles, :] = acc_cell[j, r, s, :]
                off = ((t * cout + cofs + s) * m_count + m0 + r * tiles) * group * es
                tally(store, exec_node, z_meta[0], nodes, page_size, z_meta[1], off, group * es)
                if trace.shape[0] > 0:
                    _trace(trace, trace_len, 2, off)
        j += 1


@numba.njit(cache=True, nogil=True)
def _three_level_worker(
    Gb, Db, Z, t_base, cells, tiles, batch, b_r, cp_r, c_l1, cp_l2,
    exec_node, g_meta, d_meta, z_meta, nodes, page_size, es, fetch, store, trace, trace_len,
):
    cin = Gb.shape[1]
    n_cof = (cp_l2 + cp_r - 1) // cp_r
    scratch = np.zeros((cells.shape[0], n_cof, b_r, cp_r, Z.shape[3]), dtype=Z.dtype)
    for tl in range(Gb.shape[0]):
        for cs in range(0, cin, c_l1):
            ce = min(c_l1, cin - cs)
            for k in range(cells.shape[0]):
                _cell_block(
                    Gb, Db, tl, cs, ce, cells[k, 0], cells[k, 1], cells[k, 2], tiles, batch,
                    Z.shape[1], scratch[k], exec_node, g_meta, d_meta, nodes, page_size, es,
                    fetch, trace, trace_len,
                )
        for k in range(cells.shape[0]):
            _store_cell(
                Z, t_base + tl, cells[k, 0], cells[k, 1], cells[k, 2], tiles, batch, scratch[k],
                exec_node, z_meta, nodes, page_size, es, store, trace, trace_len,
            )


@numba.njit(cache=True, nogil=True)
def _two_level_worker(
    G, D, Z, cells, tiles, batch, b_r, cp_r, c_l1, cp_l2,
    exec_node, g_meta, d_meta, z_meta, nodes, page_size, es, fetch, store, trace, trace_len,
):
    cin = G.shape[1]
    n_cof = (cp_l2 + cp_r - 1) // cp_r
    acc_cell = np.zeros((n_cof, b_r, cp_r, Z.shape[3]), dtype=Z.dtype)
    for k in range(cells.shape[0]):
        t = cells[k, 0]
        for cs in range(0, cin, c_l1):
            ce = min(c_l1, cin - cs)
            _cell_block(
                G, D, t, cs, ce, cells[k, 1], cells[k, 2], cells[k, 3], tiles, batch,
                Z.shape[1], acc_cell, exec_node, g_meta, d_meta, nodes, page_size, es,
                fetch, trace, trace_len,
            )
        _store_cell(
            Z, t, cells[k, 1], cells[k, 2], cells[k, 3], tiles, batch, acc_cell,
            exec_node, z_meta, nodes, page_size, es, store, trace, trace_len,
        )


def core_cells(plan: TransformPlan, bp: BlockingParams) -> np.ndarray:
    """``(cs', bs, mu)`` triples of the core-level loops, in loop order."""
    cfg = plan.cfg
    grid = np.stack(
        np.meshgrid(
            np.arange(0, cfg.out_channels, bp.cp_l2),
            np.arange(0, cfg.batch, bp.b_r),
            np.arange(plan.tiles_per_map),
            indexing="ij",
        ),
        axis=-1,
    )
    return grid.reshape(-1, 3).astype(np.int64)


def deal_chunks(n: int, workers: int, chunks_per_worker: int = 4) -> list[np.ndarray]:
    """Indices ``0..n-1`` cut into contiguous chunks dealt round-robin to ``workers``."""
    size = max(1, math.ceil(n / (workers * chunks_per_worker)))
    starts = range(0, n, size)
    out = [[] for _ in range(workers)]
    for i, s in enumerate(starts):
        out[i % workers].append(np.arange(s, min(s + size, n)))
    return [np.concatenate(o) if o else np.zeros(0, np.int64) for o in out]


def _meta(region) -> np.ndarray:
    return np.array([region.fixed_owner, region.size], dtype=np.int64)


def _check_operands(G: PackedOperand, D: PackedOperand, plan: TransformPlan, schedule) -> None:
    if G.kind != "G" or D.kind != "D":
        raise ConfigError(f"expected operands G and D, got {G.kind} and {D.kind}")
    if G.plan != plan or D.plan != plan:
        raise ConfigError("operands were transformed with a different plan")
    want = {
        Schedule.THREE_LEVEL: Placement.NODE_PINNED,
        Schedule.TWO_LEVEL: Placement.INTERLEAVED,
    }.get(schedule)
    if want is None:
        raise ConfigError(f"unknown schedule {schedule!r}")
    if G.placement is not want or D.placement is not want:
        raise ConfigError(
            f"{schedule.value} schedule needs {want.value} operands, got "
            f"G={G.placement.value}, D={D.placement.value}"
        )


def cmm_execute(
    G: PackedOperand,
    D: PackedOperand,
    plan: TransformPlan,
    bp: BlockingParams,
    schedule: Schedule,
    pool: WorkerPool,
    ledger: AccessLedger | None = None,
    traces: list | None = None,
    trace_capacity: int = 1 << 16,
) -> ProductTensor:
    """Compute Z for every tuple under the requested schedule.

    When ``traces`` is a list, each worker appends ``(node, array)`` where the
    array lists ``(kind, byte offset)`` of its accesses in program order
    (kind 0 = G read, 1 = D read, 2 = Z store).
    """
    _check_operands(G, D, plan, schedule)
    if pool.nodes != plan.nodes:
        raise ConfigError(f"plan is for {plan.nodes} nodes but pool has {pool.nodes}")
    cfg = plan.cfg
    bp = bp.clamped(cfg.in_channels, cfg.out_channels)
    Z = allocate_product(plan, pool.topo)
    topo = pool.topo
    es = cfg.dtype.itemsize
    z_meta = _meta(Z.region)
    tiles = plan.tiles_per_map
    cells = core_cells(plan, bp)

    def run_kernel(worker: Worker, fn, operands, metas):
        trace = np.zeros((trace_capacity if traces is not None else 0, 2), dtype=np.int64)
        trace_len = np.zeros(1, dtype=np.int64)
        fn(
            *operands, tiles, cfg.batch, bp.b_r, bp.cp_r, bp.c_l1, bp.cp_l2,
            worker.node, *metas, z_meta, topo.nodes, topo.page_size, es,
            worker.ledger.counts[Stage.CMM_FETCH], worker.ledger.counts[Stage.CMM_STORE],
            trace, trace_len,
        )
        if traces is not None:
            if trace_len[0] > trace_capacity:
                raise ConfigError(f"trace overflow: {trace_len[0]} > {trace_capacity}")
            traces.append((worker.node, trace[: trace_len[0]].copy()))

    if schedule is Schedule.THREE_LEVEL:
        per_node = []
        for n, (gb, db, r) in enumerate(zip(G.blocks, D.blocks, G.ranges)):
            tasks = []
            if len(r):
                metas = (_meta(G.regions[n]), _meta(D.regions[n]))
                for mine in deal_chunks(len(cells), pool.cores_per_node):
                    if not len(mine):
                        continue
                    operands = (gb, db, Z.data, r.start, np.ascontiguousarray(cells[mine]))
                    tasks.append(
                        lambda w, o=operands, m=metas: run_kernel(w, _three_level_worker, o, m)
                    )
            per_node.append(tasks)
        run_groups(pool, per_node, ledger)
    else:
        metas = (_meta(G.regions[0]), _meta(D.regions[0]))
        t_idx = np.repeat(np.arange(plan.tuple_count, dtype=np.int64), len(cells))
        all_cells = np.column_stack([t_idx, np.tile(cells, (plan.tuple_count, 1))])
        chunks = np.array_split(all_cells, pool.size)
        per_node = [[] for _ in range(pool.nodes)]
        for k, chunk in enumerate(chunks):
            # chunk k runs on worker k; an empty chunk still occupies its slot
            operands = (G.blocks[0], D.blocks[0], Z.data, np.ascontiguousarray(chunk))
            per_node[k // pool.cores_per_node].append(
                lambda w, o=operands: run_kernel(w, _two_level_worker, o, metas)
            )
        run_groups(pool, per_node, ledger)
    return Z


@numba.njit(cache=True, nogil=True)
def _naive_tuples(G, D, Z, t0, t1):
    lanes = Z.shape[3] // 2
    for t in range(t0, t1):
        for cp in range(Z.shape[1]):
            for m in range(Z.shape[2]):
                for l in range(lanes):
                    re = 0.0
                    im = 0.0
                    for c in range(G.shape[1]):
                        gr = G[t, c, cp, l]
                        gi = G[t, c, cp, lanes + l]
                        dr = D[t, c, m, l]
                        di = D[t, c, m, lanes + l]
                        re += gr * dr - gi * di
                        im += gr * di + gi * dr
                    Z[t, cp, m, l] = re
                    Z[t, cp, m, lanes + l] = im


def cmm_naive(G: PackedOperand, D: PackedOperand, plan: TransformPlan, pool: WorkerPool) -> np.ndarray:
    """Unblocked parallel CMM over whole tuples; the baseline for the speed smoke check."""
    g, d = G.tuple_major(), D.tuple_major()
    cfg = plan.cfg
    Z = np.zeros((plan.tuple_count, cfg.out_channels, plan.m_count, 2 * plan.lanes), dtype=cfg.dtype)
    bounds = np.linspace(0, plan.tuple_count, pool.size + 1).astype(int)
    tasks = [
        (lambda w, a=a, b=b: _naive_tuples(g, d, Z, a, b))
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    run_shared(pool, tasks)
    return Z
