"""Convolution problem description, tiling plan and the direct-convolution oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PlanError

ELEMENT_KINDS = {"fp32": np.float32, "fp64": np.float64}
COMPLEX_KINDS = {"fp32": np.complex64, "fp64": np.complex128}


@dataclass(frozen=True)
class ConvConfig:
    """A unit-stride 2D convolution layer.

    Tensors use BCHW layout: input ``(B, C, H_i, W_i)``, kernel
    ``(C', C, H_k, W_k)``, output ``(B, C', H_o, W_o)``.
    """

    batch: int
    in_channels: int
    out_channels: int
    in_height: int
    in_width: int
    kernel_height: int
    kernel_width: int
    pad: int = 0
    element_kind: str = "fp32"

    def __post_init__(self):
        counts = {
            "batch": self.batch,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "in_height": self.in_height,
            "in_width": self.in_width,
            "kernel_height": self.kernel_height,
            "kernel_width": self.kernel_width,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.pad < 0:
            raise ConfigError(f"pad must be >= 0, got {self.pad}")
        if self.element_kind not in ELEMENT_KINDS:
            raise ConfigError(f"element_kind must be one of {sorted(ELEMENT_KINDS)}")
        if self.out_height < 1 or self.out_width < 1:
            raise ConfigError(
                f"kernel {self.kernel_height}x{self.kernel_width} does not fit padded input "
                f"{self.in_height}x{self.in_width} (pad={self.pad})"
            )

    @property
    def out_height(self) -> int:
        return self.in_height + 2 * self.pad - self.kernel_height + 1

    @property
    def out_width(self) -> int:
        return self.in_width + 2 * self.pad - self.kernel_width + 1

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(ELEMENT_KINDS[self.element_kind])

    @property
    def complex_dtype(self) -> np.dtype:
        return np.dtype(COMPLEX_KINDS[self.element_kind])

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        return (self.batch, self.in_channels, self.in_height, self.in_width)

    @property
    def kernel_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_height, self.kernel_width)

    @property
    def output_shape(self) -> tuple[int, int, int, int]:
        return (self.batch, self.out_channels, self.out_height, self.out_width)


@dataclass(frozen=True)
class TransformPlan:
    """Tiling and frequency-tuple geometry shared by all pipeline stages.

    ``m = b * tiles_y * tiles_x + alpha * tiles_x + beta`` indexes tiles across
    the batch; frequency point ``p = phi * tile + gamma`` belongs to tuple
    ``p // lanes`` at lane ``p % lanes``.
    """

    cfg: ConvConfig
    tile: int
    out_tile: int
    tiles_y: int
    tiles_x: int
    lanes: int
    nodes: int
    freq_points: int
    tuple_count: int
    node_ranges: tuple[range, ...] = field(repr=False)

    @property
    def tiles_per_map(self) -> int:
        return self.tiles_y * self.tiles_x

    @property
    def m_count(self) -> int:
        return self.cfg.batch * self.tiles_per_map

    @property
    def half_rows(self) -> int:
        return self.tile // 2 + 1

    def owner(self, t: int) -> int:
        """Node owning tuple ``t`` under node-pinned placement."""
        for n, r in enumerate(self.node_ranges):
            if t in r:
                return n
        raise IndexError(f"tuple {t} outside [0, {self.tuple_count})")

    def tile_index(self, m: int) -> tuple[int, int, int]:
        """Inverse of the ``m`` linearisation: returns ``(b, alpha, beta)``."""
        b, rest = divmod(m, self.tiles_per_map)
        alpha, beta = divmod(rest, self.tiles_x)
        return b, alpha, beta


def partition_tuples(nt: int, n: int) -> list[range]:
    """Split ``nt`` tuples into ``n`` contiguous ranges; earlier nodes absorb the remainder."""
    if nt < 1 or n < 1:
        raise ValueError(f"need nt >= 1 and n >= 1, got nt={nt}, n={n}")
    base, extra = divmod(nt, n)
    ranges = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        ranges.append(range(start, start + size))
        start += size
    return ranges


def make_plan(cfg: ConvConfig, tile: int = 16, lanes: int = 4, nodes: int = 8) -> TransformPlan:
    if lanes < 1 or nodes < 1:
        raise PlanError(f"lanes and nodes must be >= 1, got lanes={lanes}, nodes={nodes}")
    if tile < 2 or tile & (tile - 1):
        raise PlanError(f"tile size must be a power of two >= 2, got {tile}")
    if tile <= max(cfg.kernel_height, cfg.kernel_width):
        raise PlanError(
            f"tile size {tile} must exceed kernel {cfg.kernel_height}x{cfg.kernel_width}"
        )
    if tile % (2 * lanes):
        raise PlanError(f"tile size {tile} must be a multiple of 2*lanes={2 * lanes}")

    # one valid-region size for both axes; a non-square kernel only wastes a little overlap
    out_tile = tile - max(cfg.kernel_height, cfg.kernel_width) + 1
    freq_points = (tile // 2 + 1) * tile
    tuple_count = freq_points // lanes
    return TransformPlan(
        cfg=cfg,
        tile=tile,
        out_tile=out_tile,
        tiles_y=-(-cfg.out_height // out_tile),
        tiles_x=-(-cfg.out_width // out_tile),
        lanes=lanes,
        nodes=nodes,
        freq_points=freq_points,
        tuple_count=tuple_count,
        node_ranges=tuple(partition_tuples(tuple_count, nodes)),
    )


def check_tensor(x: np.ndarray, shape: tuple[int, ...], name: str) -> None:
    if x.ndim != 4 or tuple(x.shape) != tuple(shape):
        raise ConfigError(f"{name} has shape {tuple(x.shape)}, expected {tuple(shape)}")


def direct_conv(I: np.ndarray, K: np.ndarray, cfg: ConvConfig) -> np.ndarray:
    """Reference cross-correlation over the zero-padded input, accumulated in float64.

    ``O[b, c', h, w] = sum_{c, i, j} I_pad[b, c, h + i, w + j] * K[c', c, i, j]``.
    The result is always float64 so it can serve as the oracle for both
    element kinds.
    """
    check_tensor(I, cfg.input_shape, "input")
    check_tensor(K, cfg.kernel_shape, "kernel")
    p = cfg.pad
    Ipad = np.pad(np.asarray(I, dtype=np.float64), ((0, 0), (0, 0), (p, p), (p, p)))
    Kd = np.asarray(K, dtype=np.float64)
    Ho, Wo = cfg.out_height, cfg.out_width

    out = np.zeros((cfg.out_channels, cfg.batch, Ho, Wo))
    for i in range(cfg.kernel_height):
        for j in range(cfg.kernel_width):
            window = Ipad[:, :, i : i + Ho, j : j + Wo]
            out += np.tensordot(Kd[:, :, i, j], window, axes=([1], [1]))
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))
