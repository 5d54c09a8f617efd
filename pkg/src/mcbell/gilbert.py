"""Distance from a behavior to the local polytope by Gilbert's algorithm.

Each iteration asks the vertex oracle for the deterministic strategy with the
largest overlap with ``target - current``, then re-projects the target onto
the convex hull of the last ``memory`` oracle vertices plus an aggregate atom
holding everything older.  The final residual ``target - current`` is a Bell
functional that separates the target whenever the oracle is exact and the
run has not converged to the inside.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from mcbell.efficiency import assigned_point
from mcbell.local import (
    DEFAULT_ENUM_CAP,
    BellFunctional,
    local_bound_exact,
    local_bound_heuristic,
    strategy_point,
)

log = logging.getLogger(__name__)

GAP_TOL = 1e-12
MONOTONE_TOL = 1e-12


@dataclass(frozen=True)
class GilbertConfig:
    epsilon: float = 1e-6
    memory: int = 50
    max_iterations: int = 2000
    symmetrize: bool = False
    party_exchange: bool = False
    oracle: str = "exact"  # or "heuristic"
    restarts: int = 200
    seed: int = 0
    cap: int = DEFAULT_ENUM_CAP
    workers: int | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 1 <= self.memory <= 200:
            raise ValueError("memory must lie in 1..200")
        if self.oracle not in ("exact", "heuristic"):
            raise ValueError(f"unknown oracle mode {self.oracle!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class GilbertState:
    """Current inner point as ``base_weight * base + sum(weights * atoms)``."""

    base: np.ndarray
    base_weight: float
    atoms: list[np.ndarray]
    weights: list[float]
    iteration: int = 0
    best_distance: float = math.inf

    @property
    def point(self) -> np.ndarray:
        p = self.base_weight * self.base
        for w, a in zip(self.weights, self.atoms):
            p = p + w * a
        return p

    def check(self, tol: float = 1e-9) -> None:
        w = np.array([self.base_weight] + list(self.weights))
        if w.min() < -tol or abs(w.sum() - 1.0) > tol:
            raise AssertionError(f"weights are not a probability vector: min {w.min()}, sum {w.sum()}")


@dataclass
class GilbertWitness:
    direction: np.ndarray = field(repr=False)  # target - current, shaped like the behavior table
    distance: float
    gap: float
    separated: bool
    iterations: int
    log: list[dict] = field(default_factory=list, repr=False)

    @property
    def functional(self) -> BellFunctional:
        return BellFunctional(self.direction)

    def __post_init__(self):
        norm = float(np.linalg.norm(self.direction))
        if not math.isclose(norm, self.distance, rel_tol=1e-9, abs_tol=1e-15):
            raise AssertionError(f"distance {self.distance} differs from the residual norm {norm}")


# ---------------------------------------------------------------------------
# symmetrization


def _permute_copies(table: np.ndarray, n: int, perm) -> np.ndarray:
    # reshape splits each composite axis most-significant first, so copy i sits at position n-1-i
    t = table.reshape((2,) * (4 * n) + table.shape[4:])
    axes = []
    for block in range(4):
        for pos in range(n):
            copy = n - 1 - pos
            axes.append(block * n + (n - 1 - perm[copy]))
    axes += list(range(4 * n, t.ndim))
    return t.transpose(axes).reshape(table.shape)


def symmetrize(table: np.ndarray, n: int, party_exchange: bool = False) -> np.ndarray:
    """Average over all simultaneous copy permutations (and optionally the party swap)."""
    table = np.asarray(table, dtype=float)
    o = table.shape[0]
    if o != 2**n or table.shape[2] != 2**n:
        raise ValueError(f"symmetrization needs m = o = 2**{n}, got shape {table.shape}")
    out = np.zeros_like(table)
    perms = list(itertools.permutations(range(n)))
    for perm in perms:
        out += _permute_copies(table, n, perm)
    out /= len(perms)
    if party_exchange:
        out = 0.5 * (out + out.transpose(1, 0, 3, 2))
    return out


# ---------------------------------------------------------------------------
# hull re-projection


def _two_point(target: np.ndarray, p: np.ndarray, v: np.ndarray) -> float:
    """Step length t in [0, 1] minimizing |target - ((1-t) p + t v)|."""
    d = v - p
    dd = float(d @ d)
    if dd == 0.0:
        return 0.0
    return min(1.0, max(0.0, float((target - p) @ d) / dd))


def reoptimize_hull(target: np.ndarray, atoms, weights=None, gram=None) -> tuple[np.ndarray, np.ndarray]:
    """Closest point to ``target`` in the convex hull of ``atoms``.

    The simplex constraint is absorbed by writing ``target - sum(w a) =
    sum(w (target - a)) = D w`` and solving the non-negative least-squares
    problem ``min |D u|^2 + (sum(u) - 1)^2``, whose minimizer is a positive
    multiple of the optimal weights.  The problem is reduced to k dimensions
    through the Gram matrix ``D^T D`` (pass it as ``gram`` to skip the
    product).  Falls back to the line search between the current point
    (``weights``) and the last atom when the solve fails or does worse.
    """
    target = np.asarray(target, dtype=float).ravel()
    A = np.stack([np.asarray(a, dtype=float).ravel() for a in atoms], axis=1)
    k = A.shape[1]
    if k == 1:
        return A[:, 0].copy(), np.ones(1)
    if weights is None:
        weights = np.zeros(k)
        weights[0] = 1.0
    weights = np.asarray(weights, dtype=float)
    D = target[:, None] - A
    G = D.T @ D if gram is None else np.asarray(gram, dtype=float)
    cur_dist = math.sqrt(max(float(weights @ G @ weights), 0.0))

    w = None
    try:
        scale = cur_dist**2 if cur_dist > 0 else 1.0
        H = G / scale + 1.0
        lam, V = np.linalg.eigh(H)
        keep = lam > lam[-1] * 1e-13
        # |M u - e|^2 = |R u - c|^2 + const with H = R^T R; the ones vector lies in range(H)
        R = np.sqrt(lam[keep])[:, None] * V[:, keep].T
        c = (V[:, keep].T @ np.ones(k)) / np.sqrt(lam[keep])
        u, _ = nnls(R, c, maxiter=50 * k)
        if np.all(np.isfinite(u)) and u.sum() > 0:
            w = u / u.sum()
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        log.debug("nnls failed: %s", exc)

    # original two-point step as reference and fallback
    current = A @ weights
    t = _two_point(target, current, A[:, -1])
    w_line = (1.0 - t) * weights
    w_line[-1] += t
    line_dist = float(np.linalg.norm(target - A @ w_line))
    if w is None or float(np.linalg.norm(target - A @ w)) > line_dist:
        w = w_line
    return A @ w, w


# ---------------------------------------------------------------------------


def _oracle(direction: np.ndarray, config: GilbertConfig, iteration: int):
    C = BellFunctional(direction)
    if config.oracle == "exact":
        value, s = local_bound_exact(C, cap=config.cap, workers=config.workers)
    else:
        # a fresh seed per iteration, still determined by the config
        value, s = local_bound_heuristic(
            C, restarts=config.restarts, seed=config.seed + iteration, workers=config.workers
        )
    return s, float(value)


def gilbert_distance(target, config: GilbertConfig, n: int | None = None) -> tuple[GilbertWitness, bool]:
    """Run Gilbert's algorithm on ``target`` (a behavior table or an object with ``.table``).

    Returns the witness and whether the run stopped by one of its criteria
    (distance below epsilon or vanishing Frank-Wolfe gap) rather than the
    iteration cap.  ``n`` (the copy count) is needed only for symmetrization
    and defaults to ``target.n``.
    """
    table = np.asarray(target.table if hasattr(target, "table") else target, dtype=float)
    o, m = table.shape[0], table.shape[2]
    if config.symmetrize or config.party_exchange:
        n = n if n is not None else getattr(target, "n", None)
        if n is None:
            n = int(round(math.log2(o)))

    def sym(t):
        if config.symmetrize:
            return symmetrize(t, n, config.party_exchange)
        if config.party_exchange:
            return 0.5 * (t + t.transpose(1, 0, 3, 2))
        return t

    state = GilbertState(base=assigned_point(o, m), base_weight=1.0, atoms=[], weights=[])
    flat_target = table.ravel()
    history: list[dict] = []
    converged = False
    gap = math.inf
    prev = math.inf
    r0 = flat_target - state.base.ravel()
    gram = np.array([[float(r0 @ r0)]])  # Gram matrix of target - atom over [base] + atoms
    while state.iteration < config.max_iterations:
        point = state.point
        direction = table - point
        dist = float(np.linalg.norm(direction))
        if dist > prev + MONOTONE_TOL:
            raise AssertionError(f"distance increased from {prev} to {dist} at iteration {state.iteration}")
        prev = min(prev, dist)
        state.best_distance = min(state.best_distance, dist)
        if dist <= config.epsilon:
            converged = True
            history.append({"iteration": state.iteration, "distance": dist, "gap": None})
            break
        s, value = _oracle(direction, config, state.iteration)
        vertex = sym(strategy_point(s))
        gap = float(np.sum(direction * (vertex - point)))
        history.append({"iteration": state.iteration, "distance": dist, "gap": gap})
        log.debug("iteration %d distance %.3e gap %.3e", state.iteration, dist, gap)
        if gap <= GAP_TOL:
            converged = True
            break
        atoms = [state.base] + state.atoms + [vertex]
        weights = np.array([state.base_weight] + state.weights + [0.0])
        residual = flat_target - vertex.ravel()
        row = np.array([float((flat_target - a.ravel()) @ residual) for a in atoms[:-1]] + [float(residual @ residual)])
        gram = np.block([[gram, row[:-1, None]], [row[None, :]]])
        _, w = reoptimize_hull(flat_target, atoms, weights, gram=gram)
        state.base_weight = float(w[0])
        state.atoms = state.atoms + [vertex]
        state.weights = [float(v) for v in w[1:]]
        gram = _evict(state, config.memory, gram, flat_target)
        state.check()
        state.iteration += 1

    direction = table - state.point
    dist = float(np.linalg.norm(direction))
    if not history or history[-1]["distance"] != dist:
        history.append({"iteration": state.iteration, "distance": dist, "gap": None})
    # C.P(eta) - max_V C.V = |C|^2 - gap for the last oracle answer
    separated = bool(dist > config.epsilon and dist * dist > gap)
    witness = GilbertWitness(direction, dist, gap, separated, state.iteration, history)
    return witness, converged


def _evict(state: GilbertState, memory: int, gram: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Keep at most ``memory`` atoms; dropped atoms are folded into the base atom.

    The current point is unchanged.  Returns the updated Gram matrix.
    """
    while len(state.atoms) > memory:
        j = int(np.argmin(state.weights))
        w = state.weights.pop(j)
        a = state.atoms.pop(j)
        total = state.base_weight + w
        if total > 0:
            state.base = (state.base_weight * state.base + w * a) / total
        state.base_weight = total
        gram = np.delete(np.delete(gram, j + 1, axis=0), j + 1, axis=1)
        rb = target - state.base.ravel()
        row = np.array([float(rb @ rb)] + [float(rb @ (target - x.ravel())) for x in state.atoms])
        gram[0, :] = row
        gram[:, 0] = row
    return gram
