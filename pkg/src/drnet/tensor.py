"""Dense float64 matrix helpers and the seeded random stream.

Matrices are plain 2-D ``numpy.float64`` arrays in C (row-major) order.
Nothing here broadcasts: every operation checks shapes explicitly.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1) if rows is None else m.reshape(rows, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim} dimensions")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {m.shape[1]}")
    return m


def check_finite(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise FloatingPointError(f"{what} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    out.flags.writeable = False
    return check_finite(out, "matmul result")


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(a).T)


class Rng:
    """Seeded random stream backed by PCG64.

    The bit generator is pinned (not numpy's default) so streams are
    identical across platforms. Extra ``keys`` derive independent
    sub-streams from the same seed, e.g. ``Rng(seed, "init", 2)``.
    """

    def __init__(self, seed: int, *keys):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.keys = keys
        entropy = [self.seed] + [_key_to_int(k) for k in keys]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, *keys) -> "Rng":
        return Rng(self.seed, *self.keys, *keys)

    def uniform(self, lo: float, hi: float, count: int) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
        # random() is in [0, 1); affine map keeps the half-open interval
        # except for rounding right at hi, which is clamped away.
        u = lo + (hi - lo) * self._gen.random(count)
        return np.where(u < hi, u, np.nextafter(hi, lo))

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def bits(self, shape) -> np.ndarray:
        return self._gen.integers(0, 2, size=shape, dtype=np.int8)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in random order."""
        return self._gen.choice(n, size=k, replace=False)


def _key_to_int(key) -> int:
    if isinstance(key, int):
        return key
    # stable across runs, unlike hash()
    return int.from_bytes(str(key).encode("utf-8"), "little") % (2**63)
