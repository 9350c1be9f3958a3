"""Logical NUMA model: topology, page placement, node-affine workers and an access ledger.

The ledger stands in for hardware counters. Every instrumented read or write
is split across the pages it touches and charged to ``(stage, executing node,
owning node)``; an access is *remote* when the two nodes differ.
"""

from __future__ import annotations

import enum
import itertools
import logging
import os
import threading
import traceback
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import ConfigError, LedgerError, NumaFFTError, WorkerError

log = logging.getLogger(__name__)

PHYSICAL_ENV = "NUMAFFT_PHYSICAL_NUMA"


@dataclass(frozen=True)
class NumaTopology:
    nodes: int = 8
    cores_per_node: int = 8
    page_size: int = 4096

    def __post_init__(self):
        if self.nodes < 1 or self.cores_per_node < 1:
            raise ConfigError(
                f"topology needs >= 1 node and core per node, got "
                f"{self.nodes}x{self.cores_per_node}"
            )
        if self.page_size < 1:
            raise ConfigError(f"page_size must be positive, got {self.page_size}")


@dataclass(frozen=True)
class Interleaved:
    """Pages dealt round-robin over all nodes (``numactl --interleave=all``)."""

    def owner(self, page: int, nodes: int) -> int:
        return page % nodes


@dataclass(frozen=True)
class OnNode:
    """Every page resident on one node (``numa_alloc_onnode``)."""

    node: int

    def owner(self, page: int, nodes: int) -> int:
        return self.node


class Placement(enum.Enum):
    """How the transforms lay out G and D."""

    NODE_PINNED = "node-pinned"
    INTERLEAVED = "interleaved"


_region_ids = itertools.count()


@dataclass(frozen=True)
class Region:
    id: int
    size: int
    policy: Interleaved | OnNode
    topo: NumaTopology = field(repr=False)

    @property
    def pages(self) -> int:
        return -(-self.size // self.topo.page_size)

    @property
    def fixed_owner(self) -> int:
        """Owning node when the whole region sits on one node, else -1."""
        return self.policy.node if isinstance(self.policy, OnNode) else -1

    def owner_of_page(self, page: int) -> int:
        return self.policy.owner(page, self.topo.nodes)

    def page_owners(self) -> np.ndarray:
        return np.array([self.owner_of_page(p) for p in range(self.pages)], dtype=np.int64)


def allocate_region(size: int, policy: Interleaved | OnNode, topo: NumaTopology) -> Region:
    if size <= 0:
        raise ConfigError(f"region size must be positive, got {size}")
    if isinstance(policy, OnNode) and not 0 <= policy.node < topo.nodes:
        raise ConfigError(f"node {policy.node} outside topology of {topo.nodes} nodes")
    return Region(next(_region_ids), int(size), policy, topo)


class Stage(enum.IntEnum):
    """Accesses 1st..6th of the wFFT/nFFT communication figures, split into fetch and store."""

    INPUT_FETCH = 0
    INPUT_STORE = 1
    KERNEL_FETCH = 2
    KERNEL_STORE = 3
    CMM_FETCH = 4
    CMM_STORE = 5
    OUTPUT_FETCH = 6
    OUTPUT_STORE = 7

    @property
    def label(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))


class AccessLedger:
    """Byte counters indexed ``[stage, executing node, owning node]``."""

    def __init__(self, nodes: int):
        self.nodes = nodes
        self.counts = np.zeros((len(Stage), nodes, nodes), dtype=np.int64)

    def add(self, stage: Stage, exec_node: int, owner: int, nbytes: int) -> None:
        if nbytes < 0:
            raise LedgerError(f"negative byte count {nbytes}")
        self.counts[stage, exec_node, owner] += nbytes

    def merge(self, other: "AccessLedger") -> None:
        self.counts += other.counts

    def total(self, stage: Stage) -> int:
        return int(self.counts[stage].sum())

    def local(self, stage: Stage) -> int:
        return int(np.trace(self.counts[stage]))

    def remote(self, stage: Stage) -> int:
        return self.total(stage) - self.local(stage)

    def remote_fraction(self, stage: Stage) -> float:
        total = self.total(stage)
        return self.remote(stage) / total if total else 0.0


def record_access(
    ledger: AccessLedger,
    worker_node: int,
    region: Region,
    offset: int,
    length: int,
    stage: Stage,
) -> None:
    """Charge ``length`` bytes at ``offset`` of ``region`` to ``worker_node``, page by page."""
    if offset < 0 or length < 0 or offset + length > region.size:
        raise LedgerError(
            f"access [{offset}, {offset + length}) outside region {region.id} of {region.size} bytes"
        )
    ps = region.topo.page_size
    pos, end = offset, offset + length
    while pos < end:
        page = pos // ps
        nxt = min((page + 1) * ps, end)
        ledger.add(stage, worker_node, region.owner_of_page(page), nxt - pos)
        pos = nxt


@numba.njit(cache=True, nogil=True)
def tally(counts, exec_node, fixed_owner, nodes, page_size, region_size, offset, length):
    """Compiled counterpart of :func:`record_access` on one ``(N, N)`` stage slice."""
    if offset < 0 or offset + length > region_size:
        raise IndexError("ledger access outside region")
    if fixed_owner >= 0:
        counts[exec_node, fixed_owner] += length
        return
    pos = offset
    end = offset + length
    page = pos // page_size
    while pos < end:
        nxt = min((page + 1) * page_size, end)
        counts[exec_node, page % nodes] += nxt - pos
        pos = nxt
        page += 1


@numba.njit(cache=True, nogil=True)
def tally_many(counts, exec_node, fixed_owner, nodes, page_size, region_size, offsets, lengths):
    for i in range(offsets.shape[0]):
        tally(counts, exec_node, fixed_owner, nodes, page_size, region_size, offsets[i], lengths[i])


@dataclass
class Worker:
    node: int
    index: int
    ledger: AccessLedger

    def record(self, region: Region, offsets, lengths, stage: Stage) -> None:
        """Charge many extents at once; ``lengths`` may be a scalar."""
        offsets = np.ascontiguousarray(offsets, dtype=np.int64).ravel()
        lengths = np.broadcast_to(np.asarray(lengths, dtype=np.int64), offsets.shape)
        try:
            tally_many(
                self.ledger.counts[stage],
                self.node,
                region.fixed_owner,
                region.topo.nodes,
                region.topo.page_size,
                region.size,
                offsets,
                np.ascontiguousarray(lengths),
            )
        except IndexError as exc:
            raise LedgerError(f"access outside region {region.id} ({region.size} bytes)") from exc


def physical_mode_requested() -> bool:
    return os.environ.get(PHYSICAL_ENV, "").lower() in {"1", "true", "yes", "on"}


def host_node_cpus() -> list[set[int]]:
    """CPU sets of the host's NUMA nodes, empty if the kernel does not expose them."""
    base = "/sys/devices/system/node"
    cpus = []
    try:
        names = sorted(
            (n for n in os.listdir(base) if n.startswith("node") and n[4:].isdigit()),
            key=lambda n: int(n[4:]),
        )
    except OSError:
        return []
    for name in names:
        try:
            with open(os.path.join(base, name, "cpulist")) as fh:
                text = fh.read().strip()
        except OSError:
            continue
        s = set()
        for part in filter(None, text.split(",")):
            lo, _, hi = part.partition("-")
            s.update(range(int(lo), int(hi or lo) + 1))
        if s:
            cpus.append(s)
    return cpus


class WorkerPool:
    """``nodes`` groups of ``cores_per_node`` workers, each tagged with its node id.

    In physical mode each worker thread additionally pins itself to the CPUs
    of host node ``group % host_nodes``. Memory placement stays logical.
    """

    def __init__(self, topo: NumaTopology, physical: bool | None = None):
        self.topo = topo
        self.physical = physical_mode_requested() if physical is None else physical
        self._host_cpus = host_node_cpus() if self.physical else []
        if self.physical and not self._host_cpus:
            log.warning("physical NUMA mode requested but no host nodes found; staying logical")

    @property
    def nodes(self) -> int:
        return self.topo.nodes

    @property
    def cores_per_node(self) -> int:
        return self.topo.cores_per_node

    @property
    def size(self) -> int:
        return self.nodes * self.cores_per_node

    def groups(self) -> list[list[tuple[int, int]]]:
        """``(node, index)`` for every worker, grouped by node."""
        u = self.cores_per_node
        return [[(g, g * u + k) for k in range(u)] for g in range(self.nodes)]

    def _pin(self, node: int) -> None:
        if not self._host_cpus or not hasattr(os, "sched_setaffinity"):
            return
        try:
            os.sched_setaffinity(0, self._host_cpus[node % len(self._host_cpus)])
        except OSError as exc:
            log.warning("could not pin worker for node %d: %s", node, exc)

    def _launch(self, plans: list[tuple[int, int, Callable[[Worker], None]]], ledger):
        """Start one thread per ``(node, index, body)`` and join them all."""
        failures: list[tuple[int, int, BaseException, str]] = []
        workers = [Worker(node, index, AccessLedger(self.nodes)) for node, index, _ in plans]

        def main(worker: Worker, body):
            if self.physical:
                self._pin(worker.node)
            try:
                body(worker)
            except BaseException as exc:  # reported after the barrier
                failures.append((worker.node, worker.index, exc, traceback.format_exc()))

        threads = [
            threading.Thread(target=main, args=(w, body), name=f"numafft-n{w.node}w{w.index}")
            for w, (_, _, body) in zip(workers, plans)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if failures:
            node, index, exc, tb = failures[0]
            if isinstance(exc, NumaFFTError):
                # domain errors keep their type so callers can tell data from bugs
                raise exc
            raise WorkerError(
                f"task failed on node {node} worker {index}: {exc!r}\n{tb}"
            ) from exc
        if ledger is not None:
            for w in workers:
                ledger.merge(w.ledger)


def run_groups(
    pool: WorkerPool,
    per_node_tasks: Sequence[Sequence[Callable[[Worker], None]]],
    ledger: AccessLedger | None = None,
) -> None:
    """Run task set ``g`` on the workers of group ``g``; tasks are dealt round-robin.

    Worker-local ledgers are merged into ``ledger`` after every group finishes.
    """
    if len(per_node_tasks) != pool.nodes:
        raise ConfigError(f"need one task set per node ({pool.nodes}), got {len(per_node_tasks)}")
    u = pool.cores_per_node
    plans = []
    for group, tasks in zip(pool.groups(), per_node_tasks):
        for k, (node, index) in enumerate(group):
            mine = list(tasks[k::u])
            if not mine:
                continue

            def body(worker, mine=mine):
                for task in mine:
                    task(worker)

            plans.append((node, index, body))
    pool._launch(plans, ledger)


def run_shared(
    pool: WorkerPool,
    tasks: Sequence[Callable[[Worker], None]],
    ledger: AccessLedger | None = None,
) -> None:
    """Run ``tasks`` from one queue shared by all workers, with no node affinity."""
    tasks = list(tasks)
    counter = itertools.count()
    lock = threading.Lock()

    def body(worker):
        while True:
            with lock:
                i = next(counter)
            if i >= len(tasks):
                return
            tasks[i](worker)

    plans = [(node, index, body) for group in pool.groups() for node, index in group]
    pool._launch(plans[: max(1, min(len(plans), len(tasks)))], ledger)


def locality_report(ledger: AccessLedger, stages: Sequence[Stage] | None = None) -> dict:
    """``{stage label: {local, remote, remote_fraction}}`` for the selected stages."""
    out = {}
    for stage in stages if stages is not None else list(Stage):
        out[stage.label] = {
            "local": ledger.local(stage),
            "remote": ledger.remote(stage),
            "remote_fraction": ledger.remote_fraction(stage),
        }
    return out
