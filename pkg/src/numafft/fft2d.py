"""Real-input 2D FFT on square power-of-two tiles with Hermitian half-spectrum storage.

A half spectrum of a ``d x d`` real tile is an array of shape ``(..., d//2 + 1, d)``
holding rows ``phi = 0 .. d/2`` of the full 2D DFT; flattening the last two
axes gives the frequency-point order ``p = phi * d + gamma``. Rows
``d/2+1 .. d-1`` follow from ``S[u, v] = conj(S[(d-u) % d, (d-v) % d])``.

All functions broadcast over leading axes so many tiles transform at once.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DataError, PlanError

# symmetry tolerance for rows 0 and d/2, relative to the tile's largest coefficient
SYMMETRY_RTOL = {np.dtype(np.complex64): 1e-4, np.dtype(np.complex128): 1e-9}


class FFTPlan:
    """Iterative radix-2 decimation-in-time FFT of length ``n``.

    Twiddles are generated in float64 and rounded once to ``dtype`` so fp32
    transforms do not inherit errors from single-precision sin/cos.
    """

    def __init__(self, n: int, dtype=np.complex128):
        if n < 1 or n & (n - 1):
            raise PlanError(f"FFT length must be a power of two, got {n}")
        self.n = n
        self.dtype = np.dtype(dtype)
        bits = n.bit_length() - 1
        idx = np.arange(n)
        rev = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            rev |= ((idx >> b) & 1) << (bits - 1 - b)
        self.bitrev = rev
        k = np.arange(n // 2 if n > 1 else 1)
        base = np.exp(-2j * np.pi * k / n)
        self._fwd = []
        self._inv = []
        size = 2
        while size <= n:
            w = base[:: n // size][: size // 2]
            self._fwd.append(w.astype(self.dtype))
            self._inv.append(np.conj(w).astype(self.dtype))
            size *= 2
        self._fwd = tuple(self._fwd)
        self._inv = tuple(self._inv)

    def __call__(self, x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
        """Unnormalized transform along ``axis`` (sign +1 when ``inverse``)."""
        n = self.n
        x = np.moveaxis(np.asarray(x, dtype=self.dtype), axis, -1)
        lead = x.shape[:-1]
        y = x[..., self.bitrev]
        size = 2
        for w in self._inv if inverse else self._fwd:
            half = size // 2
            blocks = y.reshape(*lead, n // size, 2, half)
            even = blocks[..., 0, :]
            odd = blocks[..., 1, :] * w
            y = np.stack((even + odd, even - odd), axis=-2).reshape(*lead, n)
            size *= 2
        return np.moveaxis(y, -1, axis)


@lru_cache(maxsize=None)
def get_plan(n: int, dtype=np.complex128) -> FFTPlan:
    return FFTPlan(n, np.dtype(dtype))


def _complex_for(real_dtype) -> np.dtype:
    return np.dtype(np.complex64) if np.dtype(real_dtype) == np.float32 else np.dtype(np.complex128)


def _check_tile_shape(shape: tuple[int, ...]) -> int:
    if len(shape) < 2 or shape[-1] != shape[-2]:
        raise PlanError(f"tiles must be square, got trailing shape {shape[-2:]}")
    d = shape[-1]
    if d % 2:
        raise PlanError(f"tile size must be even, got {d}")
    return d


def dft2d_reference(tile: np.ndarray) -> np.ndarray:
    """Full 2D DFT of one real tile by direct O(d^4) summation in float64."""
    t = np.asarray(tile, dtype=np.float64)
    d = t.shape[0]
    u = np.arange(d)
    # phase index (u*h + v*w) mod d for every (u, v, h, w)
    uh = np.multiply.outer(u, u)
    phase = (uh[:, None, :, None] + uh[None, :, None, :]) % d
    terms = np.exp(-2j * np.pi * phase / d) * t[None, None, :, :]
    return terms.sum(axis=(2, 3))


def fft2d_real_forward(tiles: np.ndarray) -> np.ndarray:
    """Half spectrum of real ``(..., d, d)`` tiles, shape ``(..., d//2+1, d)``.

    The column transform runs first so only the ``d/2+1`` non-redundant rows
    need the row transform.
    """
    tiles = np.asarray(tiles)
    d = _check_tile_shape(tiles.shape)
    ctype = _complex_for(tiles.dtype)
    plan = get_plan(d, ctype)
    cols = plan(tiles, axis=-2)[..., : d // 2 + 1, :]
    return plan(cols, axis=-1)


def reconstruct_full(spec: np.ndarray) -> np.ndarray:
    """Expand a half spectrum to the full ``(..., d, d)`` Hermitian spectrum."""
    spec = np.asarray(spec)
    d = spec.shape[-1]
    if spec.shape[-2] != d // 2 + 1:
        raise PlanError(f"half spectrum must have {d // 2 + 1} rows, got {spec.shape[-2]}")
    full = np.empty(spec.shape[:-2] + (d, d), dtype=np.result_type(spec.dtype, np.complex64))
    full[..., : d // 2 + 1, :] = spec
    u = np.arange(d // 2 + 1, d)
    v = np.arange(d)
    mirror = spec[..., (d - u)[:, None], ((d - v) % d)[None, :]]
    full[..., d // 2 + 1 :, :] = np.conj(mirror)
    return full


def symmetry_defect(spec: np.ndarray) -> np.ndarray:
    """Per-tile max |S[r, v] - conj(S[r, -v])| over the self-mirrored rows r = 0, d/2."""
    d = spec.shape[-1]
    rows = spec[..., [0, d // 2], :]
    mirrored = np.conj(rows[..., (-np.arange(d)) % d])
    return np.abs(rows - mirrored).max(axis=(-2, -1))


def check_symmetry(spec: np.ndarray, rtol: float | None = None) -> None:
    if rtol is None:
        rtol = SYMMETRY_RTOL.get(np.dtype(spec.dtype), 1e-9)
    defect = symmetry_defect(spec)
    scale = np.abs(spec).max(axis=(-2, -1))
    bad = defect > rtol * scale
    if np.any(bad):
        worst = float(np.max(defect / np.where(scale > 0, scale, 1.0)))
        raise DataError(
            f"{int(np.count_nonzero(bad))} spectra violate Hermitian symmetry "
            f"(worst relative defect {worst:.3g} > {rtol:g})"
        )


def _inverse_full(spec: np.ndarray) -> np.ndarray:
    """Complex inverse of the Hermitian extension, scaled by 1/d^2."""
    full = reconstruct_full(spec)
    d = full.shape[-1]
    plan = get_plan(d, full.dtype)
    out = plan(plan(full, axis=-1, inverse=True), axis=-2, inverse=True)
    return out / (d * d)


def ifft2d_real_inverse(spec: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Real tiles from half spectra; raises DataError if rows 0 or d/2 are not self-conjugate."""
    spec = np.asarray(spec)
    check_symmetry(spec, rtol)
    out = _inverse_full(spec)
    real = np.float32 if out.dtype == np.complex64 else np.float64
    return out.real.astype(real, copy=False)
