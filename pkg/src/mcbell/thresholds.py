"""Efficiency thresholds of a fixed Bell functional.

A functional is summarized by five numbers: its quantum value Q, its local
bound L, the values M_A and M_B when only one party's detector fires, and X
when neither fires.  The non-detection outcome is the last outcome index of
the functional.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from mcbell.correlations import marginals
from mcbell.efficiency import Policy, pad_outcome
from mcbell.local import DEFAULT_ENUM_CAP, BellFunctional, evaluate, local_bound_exact, local_bound_heuristic


class ThresholdError(ValueError):
    pass


@dataclass
class ThresholdReport:
    Q: float
    L: float
    M_A: float
    M_B: float
    X: float
    L_provenance: str = "exact"
    n: int | None = None
    policy: str = Policy.LAST.value
    eta_sym: float | None = None
    eta_asym: float | None = None
    flags: list[str] = field(default_factory=list)

    def with_thresholds(self) -> "ThresholdReport":
        """Fill in both thresholds where they exist."""
        try:
            self.eta_sym = eta_sym(self)
        except ThresholdError as exc:
            self.flags.append(f"eta_sym: {exc}")
        try:
            self.eta_asym = eta_asym(self)
        except ThresholdError as exc:
            self.flags.append(f"eta_asym: {exc}")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    def scaled(self, c: float) -> "ThresholdReport":
        return ThresholdReport(
            self.Q * c, self.L * c, self.M_A * c, self.M_B * c, self.X * c, self.L_provenance, self.n, self.policy
        )


def _one_sided_tables(table: np.ndarray, assigned: int):
    pa, pb = marginals(table)
    only_a = np.zeros_like(table)
    only_a[:, assigned] = pa[:, :, None]
    only_b = np.zeros_like(table)
    only_b[assigned, :] = pb[:, None, :]
    neither = np.zeros_like(table)
    neither[assigned, assigned] = 1.0
    return only_a, only_b, neither


def profile(
    C: BellFunctional,
    dist,
    policy=None,
    *,
    L: float | None = None,
    L_provenance: str | None = None,
    cap: int = DEFAULT_ENUM_CAP,
    restarts: int = 1000,
    seed: int = 0,
    workers: int | None = None,
) -> ThresholdReport:
    """(Q, L, M_A, M_B, X) of ``C`` on the ideal behavior ``dist``.

    ``policy`` defaults to EXTRA when the functional has one more outcome than
    ``dist``.  The local bound is computed exactly when Alice has at most
    ``cap`` strategies and by see-saw otherwise, unless given.
    """
    table = dist.table if hasattr(dist, "table") else np.asarray(dist)
    if policy is None:
        policy = Policy.EXTRA if C.o == table.shape[0] + 1 else Policy.LAST
    policy = Policy.parse(policy)
    if policy is Policy.EXTRA and C.o == table.shape[0] + 1:
        table = pad_outcome(table)
    if C.joint.shape != table.shape:
        raise ValueError(f"functional shape {C.joint.shape} does not match behavior shape {table.shape}")
    assigned = C.o - 1
    only_a, only_b, neither = _one_sided_tables(table, assigned)
    Q = evaluate(C, table)
    M_A = evaluate(C, only_a)
    M_B = evaluate(C, only_b)
    X = evaluate(C, neither)
    if L is None:
        if C.o**C.m <= cap:
            L, _ = local_bound_exact(C, cap=cap, workers=workers)
            L_provenance = "exact"
        else:
            L, _ = local_bound_heuristic(C, restarts=restarts, seed=seed, workers=workers)
            L_provenance = "heuristic"
    n = getattr(dist, "n", None)
    return ThresholdReport(Q, float(L), M_A, M_B, X, L_provenance or "given", n, policy.value)


def _same(u: float, v: float) -> bool:
    return math.isclose(u, v, rel_tol=1e-12, abs_tol=1e-12)


def eta_sym(report: ThresholdReport) -> float:
    """Smallest common efficiency at which the functional is violated.

    Solves eta^2 Q + eta(1-eta)(M_A+M_B) + (1-eta)^2 X = L; when X = L this
    reduces to (2L - M_A - M_B) / (Q + L - M_A - M_B).
    """
    Q, L, X = report.Q, report.L, report.X
    M = report.M_A + report.M_B
    if not Q > L:
        raise ThresholdError(f"no violation: Q={Q} <= L={L}")
    if _same(X, L):
        eta = (2 * L - M) / (Q + L - M)
        if not 0 < eta <= 1:
            raise ThresholdError(f"threshold {eta} outside (0, 1]")
        return eta
    a = Q - M + X
    b = M - 2 * X
    c = X - L
    roots = _quadratic_roots(a, b, c)
    valid = sorted(r for r in roots if 0 < r <= 1 + 1e-12)
    if not valid:
        raise ThresholdError(f"no root in (0, 1] for Q={Q}, M={M}, X={X}, L={L}")
    if len(valid) > 1 and "multiple roots" not in report.flags:
        report.flags.append("multiple roots")
    return min(valid[0], 1.0)


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    if abs(a) < 1e-300:
        return [] if b == 0 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    # cancellation-free pair
    q = -0.5 * (b + math.copysign(sq, b))
    if q == 0:
        return [0.0]
    return [q / a, c / q]


def eta_asym(report: ThresholdReport, inefficient: str = "A") -> float:
    """Threshold of one party when the other party's detectors are perfect.

    With Alice inefficient the observed value is eta*Q + (1-eta)*M_B, since a
    missed click on Alice's side leaves only Bob's detector firing.
    """
    if inefficient not in ("A", "B"):
        raise ValueError("inefficient must be 'A' or 'B'")
    Q, L = report.Q, report.L
    M = report.M_B if inefficient == "A" else report.M_A
    if not Q > M:
        raise ThresholdError(f"Q={Q} <= one-sided value {M}")
    eta = (L - M) / (Q - M)
    if not 0 < eta <= 1:
        raise ThresholdError(f"threshold {eta} outside (0, 1]")
    return eta


def correlation_thresholds(q_over_l: float) -> tuple[float, float]:
    """Thresholds of a correlation inequality with traceless observables (M_A = M_B = 0)."""
    if not q_over_l > 1:
        raise ThresholdError(f"ratio {q_over_l} must exceed 1")
    return 2.0 / (q_over_l + 1.0), 1.0 / q_over_l
