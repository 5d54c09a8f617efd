"""Deterministic strategies, Bell functionals and local bounds.

Strategies are ordered by a composite index ``sum(map[x] * o**x)`` (setting 0
least significant), Alice's index first.  Every maximization in this module
breaks ties toward the smallest index, so results do not depend on how the
work is split between threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mcbell.correlations import marginals

DEFAULT_ENUM_CAP = 2**25
MAX_SWEEPS = 1000
_CHUNK_ELEMS = 2**22


def default_workers() -> int:
    return max(1, int(os.environ.get("MCBELL_WORKERS", "1")))


class EnumerationCapError(ValueError):
    """Exact enumeration was requested for too many strategies."""


@dataclass(frozen=True)
class DeterministicStrategy:
    alice: tuple[int, ...]
    bob: tuple[int, ...]
    o: int

    def __post_init__(self):
        object.__setattr__(self, "alice", tuple(int(v) for v in self.alice))
        object.__setattr__(self, "bob", tuple(int(v) for v in self.bob))
        for v in self.alice + self.bob:
            if not 0 <= v < self.o:
                raise ValueError(f"output {v} outside range(0, {self.o})")

    @property
    def m(self) -> int:
        return len(self.alice)

    @property
    def index(self) -> tuple[int, int]:
        return map_index(self.alice, self.o), map_index(self.bob, self.o)


def map_index(response, o: int) -> int:
    return sum(int(v) * o**x for x, v in enumerate(response))


def index_map(index: int, m: int, o: int) -> tuple[int, ...]:
    return tuple((index // o**x) % o for x in range(m))


@dataclass(frozen=True, eq=False)
class BellFunctional:
    """Coefficients of sum C[a,b,x,y] P(a,b|x,y) + sum CA[a,x] P^A(a|x) + sum CB[b,y] P^B(b|y) + constant."""

    joint: np.ndarray = field(repr=False)
    marg_a: np.ndarray | None = field(default=None, repr=False)
    marg_b: np.ndarray | None = field(default=None, repr=False)
    constant: float = 0.0

    def __post_init__(self):
        joint = np.asarray(self.joint)
        o, m = joint.shape[0], joint.shape[2]
        if joint.shape != (o, o, m, m):
            raise ValueError(f"joint coefficients must have shape (o, o, m, m), got {joint.shape}")
        parts = [joint]
        for name in ("marg_a", "marg_b"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                if arr.shape != (o, m):
                    raise ValueError(f"{name} must have shape ({o}, {m}), got {arr.shape}")
                parts.append(arr)
        integral = all(_is_integral(p) for p in parts) and float(self.constant).is_integer()
        dtype = np.int64 if integral else float
        for name, arr in zip(("joint", "marg_a", "marg_b"), (joint, self.marg_a, self.marg_b)):
            if arr is not None:
                arr = np.array(np.rint(arr) if integral else arr, dtype=dtype)
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "constant", int(self.constant) if integral else float(self.constant))
        object.__setattr__(self, "integer", integral)

    @property
    def o(self) -> int:
        return self.joint.shape[0]

    @property
    def m(self) -> int:
        return self.joint.shape[2]

    def marginal_a(self) -> np.ndarray:
        return self.marg_a if self.marg_a is not None else np.zeros((self.o, self.m), self.joint.dtype)

    def marginal_b(self) -> np.ndarray:
        return self.marg_b if self.marg_b is not None else np.zeros((self.o, self.m), self.joint.dtype)

    def scaled(self, factor) -> "BellFunctional":
        return BellFunctional(
            self.joint * factor,
            None if self.marg_a is None else self.marg_a * factor,
            None if self.marg_b is None else self.marg_b * factor,
            self.constant * factor,
        )

    def permute_outputs(self, perm_a, perm_b=None) -> "BellFunctional":
        """Relabel outputs: new coefficient at output ``perm[a]`` is the old one at ``a``."""
        perm_b = perm_a if perm_b is None else perm_b
        inv_a, inv_b = np.argsort(perm_a), np.argsort(perm_b)
        joint = self.joint[inv_a][:, inv_b]
        return BellFunctional(
            joint,
            None if self.marg_a is None else self.marg_a[inv_a],
            None if self.marg_b is None else self.marg_b[inv_b],
            self.constant,
        )

    def as_vector(self) -> np.ndarray:
        return self.joint.astype(float).ravel()


def _is_integral(arr: np.ndarray) -> bool:
    if arr.dtype.kind in "iub":
        return True
    return bool(np.all(np.isfinite(arr)) and np.all(arr == np.rint(arr)))


def as_functional(direction) -> BellFunctional:
    if isinstance(direction, BellFunctional):
        return direction
    return BellFunctional(np.asarray(direction))


def strategy_point(s: DeterministicStrategy) -> np.ndarray:
    m, o = s.m, s.o
    table = np.zeros((o, o, m, m))
    x, y = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    table[np.asarray(s.alice)[x], np.asarray(s.bob)[y], x, y] = 1.0
    return table


def evaluate(C: BellFunctional, P) -> float:
    table = P.table if hasattr(P, "table") else np.asarray(P)
    if table.shape != C.joint.shape:
        raise ValueError(f"functional shape {C.joint.shape} does not match behavior shape {table.shape}")
    value = float(np.sum(C.joint * table)) + float(C.constant)
    if C.marg_a is not None or C.marg_b is not None:
        pa, pb = marginals(table)
        value += float(np.sum(C.marginal_a() * pa) + np.sum(C.marginal_b() * pb))
    return value


# ---------------------------------------------------------------------------
# best responses


def _compute_dtype(C: BellFunctional):
    if not C.integer:
        return np.float64
    bound = (
        np.abs(C.joint).sum(axis=(0, 1)).max() * C.m * C.m
        + np.abs(C.marginal_a()).sum()
        + np.abs(C.marginal_b()).sum()
        + abs(C.constant)
    )
    return np.int32 if bound < 2**30 else np.int64


class _Engine:
    """Pre-transposed coefficient arrays for batched best responses."""

    def __init__(self, C: BellFunctional):
        self.C = C
        self.m, self.o = C.m, C.o
        dt = _compute_dtype(C)
        self.dtype = dt
        # to_bob[x, a, y, b]: what Alice's (x, a) contributes to Bob's (y, b)
        self.to_bob = np.ascontiguousarray(C.joint.transpose(2, 0, 3, 1), dtype=dt)
        # to_alice[y, b, x, a]
        self.to_alice = np.ascontiguousarray(C.joint.transpose(3, 1, 2, 0), dtype=dt)
        self.marg_a = np.ascontiguousarray(C.marginal_a().T, dtype=dt)  # (x, a)
        self.marg_b = np.ascontiguousarray(C.marginal_b().T, dtype=dt)  # (y, b)
        self.constant = dt(C.constant)

    def bob_scores(self, alice_maps: np.ndarray) -> np.ndarray:
        """Scores S[k, y, b] of each Bob reply against each Alice map (batch k)."""
        xs = np.arange(self.m)
        return self.to_bob[xs, alice_maps].sum(axis=1) + self.marg_b

    def alice_scores(self, bob_maps: np.ndarray) -> np.ndarray:
        ys = np.arange(self.m)
        return self.to_alice[ys, bob_maps].sum(axis=1) + self.marg_a

    def alice_fixed(self, alice_maps: np.ndarray) -> np.ndarray:
        xs = np.arange(self.m)
        return self.marg_a[xs, alice_maps].sum(axis=1) + self.constant

    def bob_fixed(self, bob_maps: np.ndarray) -> np.ndarray:
        ys = np.arange(self.m)
        return self.marg_b[ys, bob_maps].sum(axis=1) + self.constant

    def value(self, alice_maps: np.ndarray, bob_maps: np.ndarray) -> np.ndarray:
        s = self.bob_scores(alice_maps)
        picked = np.take_along_axis(s, bob_maps[:, :, None], axis=2)[:, :, 0].sum(axis=1)
        return picked + self.alice_fixed(alice_maps)


def best_response(C: BellFunctional, alice_map) -> tuple[float, tuple[int, ...]]:
    """Bob's optimal reply to a fixed Alice map and the resulting value."""
    eng = _Engine(C)
    alice = np.asarray(alice_map, dtype=np.int64)[None, :]
    scores = eng.bob_scores(alice)[0]
    bob = scores.argmax(axis=1)  # first maximum -> smallest b
    value = scores.max(axis=1).sum() + eng.alice_fixed(alice)[0]
    return _to_python(value), tuple(int(b) for b in bob)


def best_response_value(C: BellFunctional, alice_map) -> float:
    return best_response(C, alice_map)[0]


def _to_python(value):
    return int(value) if isinstance(value, (np.integer, int)) else float(value)


# ---------------------------------------------------------------------------
# exact enumeration


def _all_maps(count: int, o: int) -> np.ndarray:
    """Every map of ``count`` settings, row i has composite index i."""
    idx = np.arange(o**count, dtype=np.int64)
    return np.stack([(idx // o**x) % o for x in range(count)], axis=1) if count else np.zeros((1, 0), np.int64)


def local_bound_exact(
    C: BellFunctional, cap: int = DEFAULT_ENUM_CAP, workers: int | None = None
) -> tuple[float, DeterministicStrategy]:
    """Maximum of the functional over deterministic strategies.

    Enumerates Alice's ``o**m`` maps (split into two halves of settings that
    are combined by broadcasting) and collapses Bob's side to his per-setting
    best response.
    """
    C = as_functional(C)
    m, o = C.m, C.o
    if o**m > cap:
        raise EnumerationCapError(
            f"{o}**{m} Alice strategies exceed the enumeration cap {cap}; use local_bound_heuristic"
        )
    eng = _Engine(C)
    h = m // 2
    low_maps, high_maps = _all_maps(h, o), _all_maps(m - h, o)
    xs_low, xs_high = np.arange(h), np.arange(h, m)
    low = eng.to_bob[xs_low[None, :], low_maps].sum(axis=1)  # (o**h, m, o)
    high = eng.to_bob[xs_high[None, :], high_maps].sum(axis=1) + eng.marg_b
    low_fixed = eng.marg_a[xs_low[None, :], low_maps].sum(axis=1)
    high_fixed = eng.marg_a[xs_high[None, :], high_maps].sum(axis=1) + eng.constant
    n_low = low.shape[0]
    chunk = max(1, _CHUNK_ELEMS // (n_low * m * o))
    starts = list(range(0, high.shape[0], chunk))

    def scan(start):
        stop = min(start + chunk, high.shape[0])
        s = low[None, :, :, :] + high[start:stop, None, :, :]
        vals = s.max(axis=3).sum(axis=2) + low_fixed[None, :] + high_fixed[start:stop, None]
        k = int(vals.argmax())
        return vals.flat[k], start * n_low + k

    workers = workers or default_workers()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(scan, starts))
    else:
        results = [scan(s) for s in starts]
    # deterministic reduction: highest value, then smallest index
    best_val, best_idx = max(results, key=lambda r: (r[0], -r[1]))
    alice = index_map(int(best_idx), m, o)
    value, bob = best_response(C, alice)
    return value, DeterministicStrategy(alice, bob, o)


# ---------------------------------------------------------------------------
# see-saw heuristic


def _improve(scores: np.ndarray, current: np.ndarray | None) -> np.ndarray:
    """Per-setting argmax; an existing choice is kept whenever it is still optimal."""
    best = scores.argmax(axis=2)
    if current is None:
        return best
    cur = np.take_along_axis(scores, current[:, :, None], axis=2)[:, :, 0]
    keep = cur >= scores.max(axis=2)
    return np.where(keep, current, best)


def _seesaw_batch(eng: _Engine, bob: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    alice = None
    active = np.ones(bob.shape[0], dtype=bool)
    for _ in range(MAX_SWEEPS):
        new_alice = _improve(eng.alice_scores(bob), alice)
        new_bob = _improve(eng.bob_scores(new_alice), bob)
        if alice is not None:
            active = np.any(new_alice != alice, axis=1) | np.any(new_bob != bob, axis=1)
        alice, bob = new_alice, new_bob
        if not active.any():
            break
    return alice, bob, eng.value(alice, bob)


def local_bound_heuristic(
    C: BellFunctional, restarts: int = 100, seed: int = 0, workers: int | None = None
) -> tuple[float, DeterministicStrategy]:
    """Alternating best responses from random Bob maps; returns a lower bound on the local bound."""
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    C = as_functional(C)
    eng = _Engine(C)
    m, o = C.m, C.o
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, o, size=(restarts, m))
    batch = max(1, _CHUNK_ELEMS // (m * m * o))
    chunks = [starts[i : i + batch] for i in range(0, restarts, batch)]

    workers = workers or default_workers()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda b: _seesaw_batch(eng, b), chunks))
    else:
        results = [_seesaw_batch(eng, b) for b in chunks]
    alice = np.concatenate([r[0] for r in results])
    bob = np.concatenate([r[1] for r in results])
    values = np.concatenate([r[2] for r in results])
    k = int(values.argmax())  # earliest restart among ties
    return _to_python(values[k]), DeterministicStrategy(alice[k], bob[k], o)


def oracle_max_overlap(
    direction, restarts: int = 100, seed: int = 0, exact: bool = True, cap: int = DEFAULT_ENUM_CAP, workers=None
) -> tuple[DeterministicStrategy, float]:
    """Vertex of the local polytope with the largest overlap with ``direction``."""
    C = as_functional(direction)
    if exact:
        value, s = local_bound_exact(C, cap=cap, workers=workers)
    else:
        value, s = local_bound_heuristic(C, restarts=restarts, seed=seed, workers=workers)
    return s, value
