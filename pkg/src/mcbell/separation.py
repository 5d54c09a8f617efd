"""Membership in the local polytope by linear programming.

The LP looks for coefficients K, each bounded in [-B, 1], maximizing
<K, target> subject to <K, vertex> <= 0 on every deterministic vertex.
By default the functional is also pinned to zero on the vertex where both
parties output the no-click outcome (``homogeneous``), so that its value
there equals its local bound; ``homogeneous=False`` searches all
hyperplanes.

A vertex (alice_map, bob_map) enters as the bilinear form
``e(alice_map) @ K @ e(bob_map)``, where ``e`` is the indicator vector of
the map's (setting, outcome) choices.  In the Collins-Gisin representation the
last outcome is dropped and a leading unit entry carries the marginal and
constant coefficients; in the full representation every outcome is kept.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from mcbell.correlations import MultiCopyDistribution
from mcbell.efficiency import DeflatedPoint, EfficiencyModel, Policy, deflate, to_collins_gisin
from mcbell.local import (
    DEFAULT_ENUM_CAP,
    BellFunctional,
    _all_maps,
    _Engine,
    evaluate,
    local_bound_exact,
    local_bound_heuristic,
)

FEAS_TOL = 1e-9
SEPARATION_TOL = 1e-9
FULL_ENUM_LIMIT = 2**24


class LPError(RuntimeError):
    """The LP solver failed on an instance that is feasible by construction."""


class RationalizationError(ValueError):
    pass


class Status(str, enum.Enum):
    SEPARATED = "separated"
    INSIDE = "inside"
    TOLERANCE_LIMIT = "tolerance-limit"


def solve_lp(c, A_ub, b_ub, bounds, A_eq=None, b_eq=None) -> tuple[float, np.ndarray]:
    """Maximize c @ z subject to A_ub @ z <= b_ub, A_eq @ z = b_eq and box bounds."""
    res = linprog(
        -np.asarray(c, dtype=float),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": FEAS_TOL},
    )
    if res.status != 0:
        raise LPError(f"LP solver failed: {res.message}")
    return -float(res.fun), res.x


# ---------------------------------------------------------------------------
# representations


def _embed(maps: np.ndarray, o: int, reduced: bool) -> sp.csr_matrix:
    """Indicator rows e(map) for a batch of response maps."""
    count, m = maps.shape
    x = np.arange(m)[None, :]
    if reduced:
        width = m * (o - 1) + 1
        keep = maps < o - 1
        cols = np.where(keep, 1 + x * (o - 1) + maps, -1)
        rows = np.repeat(np.arange(count), m).reshape(count, m)
        r = np.concatenate([np.arange(count), rows[keep]])
        c = np.concatenate([np.zeros(count, np.int64), cols[keep]])
    else:
        width = m * o
        r = np.repeat(np.arange(count), m)
        c = (x * o + maps).ravel()
    return sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(count, width))


def target_matrix(table: np.ndarray, reduced: bool) -> np.ndarray:
    if reduced:
        return to_collins_gisin(table).matrix
    o, m = table.shape[0], table.shape[2]
    return table.transpose(2, 0, 3, 1).reshape(m * o, m * o)


def functional_from_matrix(K: np.ndarray, m: int, o: int, reduced: bool) -> BellFunctional:
    if not reduced:
        return BellFunctional(K.reshape(m, o, m, o).transpose(1, 3, 0, 2))
    k = o - 1
    joint = np.zeros((o, o, m, m))
    joint[:k, :k] = K[1:, 1:].reshape(m, k, m, k).transpose(1, 3, 0, 2)
    marg_a = np.zeros((o, m))
    marg_b = np.zeros((o, m))
    marg_a[:k] = K[1:, 0].reshape(m, k).T
    marg_b[:k] = K[0, 1:].reshape(m, k).T
    return BellFunctional(joint, marg_a, marg_b, K[0, 0])


# ---------------------------------------------------------------------------


@dataclass
class SeparationProblem:
    target: DeflatedPoint
    constraints: str = "rowgen"  # or "full"
    representation: str = "cg"  # or "full"
    homogeneous: bool = True
    lower_bound: float = 64.0
    max_iterations: int = 500
    cuts_per_iteration: int = 64
    workers: int | None = None

    def __post_init__(self):
        if self.constraints not in ("rowgen", "full"):
            raise ValueError(f"unknown constraint source {self.constraints!r}")
        if self.representation not in ("cg", "full"):
            raise ValueError(f"unknown representation {self.representation!r}")

    @property
    def m(self) -> int:
        return self.target.m

    @property
    def o(self) -> int:
        return self.target.o


@dataclass
class SeparationResult:
    objective: float
    functional: BellFunctional = field(repr=False)
    status: Status
    iterations: int
    constraints: int
    max_violation: float

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "status": self.status.value,
            "iterations": self.iterations,
            "constraints": self.constraints,
            "max_violation": self.max_violation,
        }


def _all_best_responses(C: BellFunctional) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every Alice map with Bob's best reply and its value (small scenarios only)."""
    eng = _Engine(C)
    alice = _all_maps(C.m, C.o)
    scores = eng.bob_scores(alice)
    bob = scores.argmax(axis=2)
    values = scores.max(axis=2).sum(axis=1) + eng.alice_fixed(alice)
    return alice, bob, values.astype(float)


def separate(problem: SeparationProblem) -> SeparationResult:
    m, o = problem.m, problem.o
    reduced = problem.representation == "cg"
    T = target_matrix(problem.target.table, reduced)
    size = T.shape[0]
    bounds = [(-problem.lower_bound, 1.0)] * (size * size)
    objective_vec = T.ravel()
    last = np.full((1, m), o - 1)
    A_eq = b_eq = None
    if problem.homogeneous:
        if reduced:
            bounds[0] = (0.0, 0.0)  # the unit coefficient is the value on the no-click vertex
        else:
            A_eq = sp.kron(_embed(last, o, False), _embed(last, o, False), format="csr")
            b_eq = np.zeros(1)

    if problem.constraints == "full":
        n_vertices = (o**m) ** 2
        if n_vertices > FULL_ENUM_LIMIT:
            raise ValueError(f"{n_vertices} vertices exceed the full-enumeration limit {FULL_ENUM_LIMIT}")
        E = _embed(_all_maps(m, o), o, reduced)
        A = sp.kron(E, E, format="csr")
        q, z = solve_lp(objective_vec, A, np.zeros(A.shape[0]), bounds, A_eq, b_eq)
        K = z.reshape(size, size)
        F = functional_from_matrix(K, m, o, reduced)
        violation, _ = local_bound_exact(F, workers=problem.workers)
        return _result(q, F, 1, A.shape[0], float(violation))

    # row generation, seeded with the all-last vertex
    rows = [sp.kron(_embed(last, o, reduced), _embed(last, o, reduced), format="csr")]
    seen = {(tuple(last[0]), tuple(last[0]))}
    small = o**m <= 4096
    for it in range(1, problem.max_iterations + 1):
        A = sp.vstack(rows, format="csr")
        q, z = solve_lp(objective_vec, A, np.zeros(A.shape[0]), bounds, A_eq, b_eq)
        K = z.reshape(size, size)
        F = functional_from_matrix(K, m, o, reduced)
        if small:
            alice, bob, values = _all_best_responses(F)
            violation = float(values.max())
            order = np.argsort(-values, kind="stable")[: problem.cuts_per_iteration]
            new = [(alice[i], bob[i]) for i in order if values[i] > SEPARATION_TOL]
            # Alice's replies to the same Bob maps tighten the cut set faster
            F_t = BellFunctional(
                F.joint.transpose(1, 0, 3, 2), F.marg_b, F.marg_a, F.constant
            )
            b2, a2, v2 = _all_best_responses(F_t)
            order2 = np.argsort(-v2, kind="stable")[: problem.cuts_per_iteration]
            new += [(a2[i], b2[i]) for i in order2 if v2[i] > SEPARATION_TOL]
        else:
            violation, s = local_bound_exact(F, workers=problem.workers)
            violation = float(violation)
            new = [(np.array(s.alice), np.array(s.bob))] if violation > SEPARATION_TOL else []
        if violation <= SEPARATION_TOL:
            return _result(q, F, it, A.shape[0], violation)
        fresh = []
        for a_map, b_map in new:
            key = (tuple(int(v) for v in a_map), tuple(int(v) for v in b_map))
            if key not in seen:
                seen.add(key)
                fresh.append(key)
        if not fresh:
            raise LPError("oracle returned only known constraints; restricted LP is inconsistent")
        a_maps = np.array([k[0] for k in fresh])
        b_maps = np.array([k[1] for k in fresh])
        Ea, Eb = _embed(a_maps, o, reduced), _embed(b_maps, o, reduced)
        # row-wise Kronecker product of the paired indicator rows
        rows.append(sp.csr_matrix(_rowwise_kron(Ea, Eb)))
    return SeparationResult(q, F, Status.TOLERANCE_LIMIT, problem.max_iterations, A.shape[0], violation)


def _rowwise_kron(Ea: sp.csr_matrix, Eb: sp.csr_matrix) -> sp.csr_matrix:
    a, b = Ea.toarray(), Eb.toarray()
    return sp.csr_matrix((a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1))


def _result(q, F, iterations, n_constraints, violation) -> SeparationResult:
    status = Status.SEPARATED if q > SEPARATION_TOL else Status.INSIDE
    return SeparationResult(q, F, status, iterations, n_constraints, violation)


# ---------------------------------------------------------------------------


def model_for(mode: str, eta: float, policy) -> EfficiencyModel:
    if mode == "sym":
        return EfficiencyModel.symmetric(eta, policy)
    if mode == "asym":
        return EfficiencyModel.asymmetric(eta, policy)
    raise ValueError(f"unknown mode {mode!r}; expected 'sym' or 'asym'")


@dataclass
class BisectionResult:
    eta: float
    result: SeparationResult = field(repr=False)
    steps: list[tuple[float, float]] = field(default_factory=list, repr=False)


def threshold_by_bisection(
    dist: MultiCopyDistribution,
    policy=Policy.LAST,
    mode: str = "sym",
    *,
    width: float = 1e-4,
    q_tol: float = 1e-6,
    constraints: str = "rowgen",
    representation: str = "cg",
    homogeneous: bool = True,
    workers: int | None = None,
) -> BisectionResult:
    """Smallest efficiency (to ``width``) at which the LP separates the deflated point."""
    lo, hi = (0.5, 1.0) if mode == "sym" else (0.3, 1.0)

    def run(eta):
        point = deflate(dist, model_for(mode, eta, policy))
        return separate(SeparationProblem(point, constraints, representation, homogeneous, workers=workers))

    best = run(hi)
    steps = [(hi, best.objective)]
    if not best.objective > q_tol:
        raise LPError("ideal point is not separated from the local polytope")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        res = run(mid)
        steps.append((mid, res.objective))
        if res.objective > q_tol:
            hi, best = mid, res
        else:
            lo = mid
    return BisectionResult(hi, best, steps)


# ---------------------------------------------------------------------------


def separates(C: BellFunctional, target, cap: int = DEFAULT_ENUM_CAP, restarts: int = 1000, seed: int = 0) -> bool:
    """True when ``C`` is larger on ``target`` than on every local point."""
    if C.o**C.m <= cap:
        L, _ = local_bound_exact(C, cap=cap)
    else:
        L, _ = local_bound_heuristic(C, restarts=restarts, seed=seed)
    return evaluate(C, target) > L


def _coefficients(C: BellFunctional) -> np.ndarray:
    parts = [C.joint.ravel(), C.marginal_a().ravel(), C.marginal_b().ravel(), [C.constant]]
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _rebuild(C: BellFunctional, values: np.ndarray) -> BellFunctional:
    o, m = C.o, C.m
    nj = o * o * m * m
    joint = values[:nj].reshape(o, o, m, m)
    ma = values[nj : nj + o * m].reshape(o, m)
    mb = values[nj + o * m : nj + 2 * o * m].reshape(o, m)
    return BellFunctional(
        joint,
        ma if C.marg_a is not None else None,
        mb if C.marg_b is not None else None,
        values[-1],
    )


def rationalize(
    C: BellFunctional,
    max_denominator: int = 1000,
    check: Callable[[BellFunctional], bool] | None = None,
    tol: float = 1e-6,
) -> BellFunctional:
    """Positive multiple of ``C`` with integer coefficients.

    First looks for a common rational grid with denominators up to
    ``max_denominator``; failing that (or if ``check`` rejects the grid
    version), rounds ``C`` scaled so its largest coefficient is
    ``max_denominator``.  ``check`` decides whether the integer functional
    keeps the separation property.
    """
    if C.integer:
        return C
    vals = _coefficients(C)
    scale = np.abs(vals).max()
    if scale == 0:
        raise RationalizationError("zero functional")
    candidates = []
    fracs = [Fraction(float(v) / scale).limit_denominator(max_denominator) for v in vals]
    if all(abs(float(f) - v / scale) <= tol for f, v in zip(fracs, vals)):
        den = math.lcm(*(f.denominator for f in fracs))
        ints = np.array([int(f * den) for f in fracs], dtype=np.int64)
        g = math.gcd(*(int(abs(i)) for i in ints))
        candidates.append(ints // max(g, 1))
    rounded = np.rint(vals / scale * max_denominator).astype(np.int64)
    g = math.gcd(*(int(abs(i)) for i in rounded))
    candidates.append(rounded // max(g, 1))
    for ints in candidates:
        F = _rebuild(C, ints.astype(float))
        if check is None or check(F):
            return F
    raise RationalizationError(f"no integer functional within denominator {max_denominator} keeps separation")
