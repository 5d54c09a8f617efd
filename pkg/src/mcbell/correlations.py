"""Quantum behaviors of n copies of the maximally entangled two-qubit state.

Every behavior in this package is a numpy array ``table[a, b, x, y]`` of
shape ``(o, o, m, m)`` holding P(a, b | x, y).  Multi-copy outputs and inputs
are composite indices over the copies, little-endian: copy 1 is the least
significant bit, so ``a = a_1 + 2*a_2 + ... + 2**(n-1)*a_n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NORM_TOL = 1e-12
IO_TOL = 1e-10
UNIT_TOL = 1e-9
DEFAULT_MAX_COPIES = 4


class SignalingError(ValueError):
    """A behavior violates normalization or no-signaling beyond tolerance."""


def encode(bits) -> int:
    """Composite index of a per-copy bit sequence (copy 1 first)."""
    return sum(int(b) << i for i, b in enumerate(bits))


def decode(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> i) & 1 for i in range(n))


def check_behavior(table: np.ndarray, tol: float = NORM_TOL) -> None:
    """Raise SignalingError unless ``table`` is a normalized no-signaling behavior."""
    if table.ndim != 4 or table.shape[0] != table.shape[1] or table.shape[2] != table.shape[3]:
        raise SignalingError(f"expected shape (o, o, m, m), got {table.shape}")
    if table.min() < -tol:
        raise SignalingError(f"negative probability {table.min():.3e}")
    sums = table.sum(axis=(0, 1))
    if np.abs(sums - 1.0).max() > tol:
        raise SignalingError(f"normalization off by {np.abs(sums - 1.0).max():.3e}")
    pa = table.sum(axis=1)  # (a, x, y)
    pb = table.sum(axis=0)  # (b, x, y)
    if np.abs(pa - pa[:, :, :1]).max() > tol:
        raise SignalingError("Alice's marginal depends on Bob's input")
    if np.abs(pb - pb[:, :1, :]).max() > tol:
        raise SignalingError("Bob's marginal depends on Alice's input")


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm2 = self.x**2 + self.y**2 + self.z**2
        if abs(norm2 - 1.0) > UNIT_TOL:
            raise ValueError(f"Bloch vector ({self.x}, {self.y}, {self.z}) is not unit length")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class MeasurementFamily:
    party: str
    settings: tuple[BlochVector, ...]

    def __post_init__(self):
        if len(self.settings) < 1:
            raise ValueError("a measurement family needs at least one setting")


@dataclass(frozen=True, eq=False)
class MultiCopyDistribution:
    """P(a, b | x, y) for ``n`` copies; ``m = o = 2**n`` for the product scenario."""

    n: int
    table: np.ndarray = field(repr=False)
    tol: float = field(default=NORM_TOL, repr=False)  # loaded tables are checked at the I/O tolerance

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        check_behavior(table, self.tol)

    @property
    def m(self) -> int:
        return self.table.shape[2]

    @property
    def o(self) -> int:
        return self.table.shape[0]

    def to_json(self) -> dict:
        # entries row-major in (x, y, a, b) order
        return {
            "n": self.n,
            "m": self.m,
            "o": self.o,
            "entries": self.table.transpose(2, 3, 0, 1).ravel().tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MultiCopyDistribution":
        m, o = int(doc["m"]), int(doc["o"])
        entries = np.asarray(doc["entries"], dtype=float)
        if entries.size != m * m * o * o:
            raise SignalingError(f"expected {m * m * o * o} entries, got {entries.size}")
        table = entries.reshape(m, m, o, o).transpose(2, 3, 0, 1)
        check_behavior(table, IO_TOL)
        return cls(int(doc["n"]), _renormalize(table), IO_TOL)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "MultiCopyDistribution":
        return cls.from_json(json.loads(Path(path).read_text()))


class SingleCopyDistribution(MultiCopyDistribution):
    """The 2x2x2x2 table of a single copy."""

    def __init__(self, table: np.ndarray, tol: float = NORM_TOL):
        super().__init__(1, table, tol)
        if self.table.shape != (2, 2, 2, 2):
            raise ValueError(f"single-copy table must be 2x2x2x2, got {self.table.shape}")

    @classmethod
    def from_json(cls, doc: dict) -> "SingleCopyDistribution":
        base = MultiCopyDistribution.from_json(doc)
        return cls(base.table, base.tol)


def _renormalize(table: np.ndarray) -> np.ndarray:
    # absorb I/O rounding so loaded tables meet the internal 1e-12 tolerance
    table = np.clip(table, 0.0, None)
    return table / table.sum(axis=(0, 1), keepdims=True)


def chsh_optimal_single_copy() -> SingleCopyDistribution:
    """Statistics of the CHSH-optimal Pauli measurements on |phi+>."""
    a, b, x, y = np.indices((2, 2, 2, 2))
    sign = (-1.0) ** (a ^ b) * (-1.0) ** (x * y)
    return SingleCopyDistribution(0.25 * (1.0 + sign * math.sqrt(2) / 2))


def single_copy_from_bloch(alice: MeasurementFamily, bob: MeasurementFamily) -> SingleCopyDistribution:
    if len(alice.settings) != 2 or len(bob.settings) != 2:
        raise ValueError("single-copy scenario needs exactly two settings per party")
    avec = np.array([v.as_array() for v in alice.settings])
    # |phi+> correlations use Bob's direction reflected in the y component
    bvec = np.array([v.as_array() for v in bob.settings]) * np.array([1.0, -1.0, 1.0])
    corr = avec @ bvec.T  # (x, y)
    parity = (-1.0) ** (np.arange(2)[:, None] ^ np.arange(2)[None, :])  # (a, b)
    table = 0.25 * (1.0 + parity[:, :, None, None] * corr[None, None, :, :])
    return SingleCopyDistribution(table)


def _kron_tables(low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Product table with ``high`` occupying the more significant index bits."""
    prod = np.einsum("abxy,cdzw->cadbzxwy", low, high)
    s = prod.shape
    return prod.reshape(s[0] * s[1], s[2] * s[3], s[4] * s[5], s[6] * s[7])


def tensor_power(base: MultiCopyDistribution, n: int, max_copies: int = DEFAULT_MAX_COPIES) -> MultiCopyDistribution:
    if n < 1:
        raise ValueError("copy count must be at least 1")
    if n > max_copies:
        raise ValueError(f"{n} copies exceeds the cap of {max_copies} (table has 2**(4n) entries)")
    if base.n != 1:
        raise ValueError("tensor_power expects a single-copy base")
    table = base.table
    for _ in range(n - 1):
        table = _kron_tables(table, base.table)
    dist = MultiCopyDistribution(n, table)
    for factor in copy_factors(dist):
        if np.abs(factor - base.table).max() > NORM_TOL:
            raise SignalingError("n-copy table does not factorize into its base")
    return dist


def copy_factors(dist: MultiCopyDistribution) -> list[np.ndarray]:
    """Recover each copy's 2x2x2x2 table by summing out the other copies' outputs.

    The other copies' inputs are fixed to 0, which is valid for product
    behaviors since every factor is normalized per input pair.
    """
    n = dist.n
    t = dist.table.reshape((2,) * (4 * n))
    # reshape splits each composite axis most-significant first: copy i sits at position n-1-i
    out = []
    for i in range(n):
        k = n - 1 - i
        idx = []
        for block in range(4):
            for pos in range(n):
                if pos == k:
                    idx.append(slice(None))
                elif block < 2:
                    idx.append(slice(None))
                else:
                    idx.append(0)
        sub = t[tuple(idx)]
        # remaining axes: a bits (n), b bits (n), x_i, y_i
        a_axes = [p for p in range(n) if p != k]
        b_axes = [n + p for p in range(n) if p != k]
        sub = sub.sum(axis=tuple(a_axes + b_axes))
        out.append(sub)
    return out


def marginals(dist) -> tuple[np.ndarray, np.ndarray]:
    """Return (P^A[a, x], P^B[b, y]); raises SignalingError if they depend on the other input."""
    table = dist.table if hasattr(dist, "table") else np.asarray(dist)
    pa = table.sum(axis=1)
    pb = table.sum(axis=0)
    if np.abs(pa - pa[:, :, :1]).max() > IO_TOL or np.abs(pb - pb[:, :1, :]).max() > IO_TOL:
        raise SignalingError("behavior is signaling; marginals are not well defined")
    return pa[:, :, 0].copy(), pb[:, 0, :].copy()
