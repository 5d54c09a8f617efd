"""The n-fold product of CHSH games and its detection-efficiency bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mcbell.correlations import chsh_optimal_single_copy, tensor_power
from mcbell.local import BellFunctional, evaluate, local_bound_exact, local_bound_heuristic

MAX_BUILD = 6
MAX_TENSOR = 4
EXACT_L = {1: 3, 2: 10, 3: 31}
EMPIRICAL_L = {4: 100, 5: 310, 6: 1000}
# rows excluded when comparing against the reference table
SUSPECT_ROWS = {
    9: "excluded from comparison (the closed forms agree with the reference row)",
    12: "reference row disagrees with the closed forms (it repeats the n=10 and n=9 cells)",
}


def build(n: int) -> BellFunctional:
    """CHSH_n: coefficient 1 where a_i xor b_i = x_i y_i on every copy, else 0."""
    if not 1 <= n <= MAX_BUILD:
        raise ValueError(f"n={n} outside 1..{MAX_BUILD}")
    d = 2**n
    a, b, x, y = np.meshgrid(*(np.arange(d),) * 4, indexing="ij")
    # bitwise: a xor b must equal x AND y on every copy
    coef = ((a ^ b) == (x & y)).astype(np.int8)
    # unique game: for every (a, x, y) exactly one b wins
    if not np.all(coef.sum(axis=1) == 1):
        raise AssertionError("CHSH_n is not a unique game")
    return BellFunctional(coef)


def quantum_value(n: int) -> float:
    """(2 + sqrt 2)^n, checked against the n-copy table when it is small enough."""
    closed = (2 + math.sqrt(2)) ** n
    if n <= MAX_TENSOR:
        value = evaluate(build(n), tensor_power(chsh_optimal_single_copy(), n))
        if abs(value - closed) > 1e-9:
            raise AssertionError(f"CHSH_{n} on the n-copy table gives {value}, expected {closed}")
        return value
    return closed


def local_bound(n: int, mode: str = "exact", restarts: int = 1000, seed: int = 0, workers=None):
    """(L, provenance) with provenance "exact" or "heuristic"."""
    C = build(n)
    if mode == "exact":
        value, _ = local_bound_exact(C, workers=workers)
    elif mode == "heuristic":
        value, _ = local_bound_heuristic(C, restarts=restarts, seed=seed, workers=workers)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return value, mode


def ambainis_bound(n: int) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    return (1 + math.sqrt(5)) ** n


def thresholds(n: int, L: float) -> tuple[float, float]:
    """(eta_sym, eta_asym) bounds for CHSH_n given a local bound L, with M_A = M_B = 2^n."""
    Q = (2 + math.sqrt(2)) ** n
    M = 2.0**n
    return (2 * L - 2 * M) / (Q + L - 2 * M), (L - M) / (Q - M)


@dataclass
class Table1Row:
    n: int
    eta_sym: float
    eta_asym: float
    provenance: str  # "exact", "ambainis"
    L: float
    eta_sym_empirical: float | None = None
    eta_asym_empirical: float | None = None
    flag: str | None = None

    def format(self) -> str:
        def cell(v, e):
            return f"{v:.4f}" + (f" ({e:.4f})" if e is not None else "")

        text = f"{self.n:>4}  {cell(self.eta_sym, self.eta_sym_empirical):<18} {cell(self.eta_asym, self.eta_asym_empirical):<18}"
        return text + (f"  [{self.flag}]" if self.flag else "")


def table1(n_list) -> list[Table1Row]:
    """Threshold bounds: exact L for n <= 3, the analytic bound otherwise, plus empirical L in parentheses for n = 4..6."""
    rows = []
    for n in n_list:
        if n in EXACT_L:
            L, prov = EXACT_L[n], "exact"
        else:
            L, prov = ambainis_bound(n), "ambainis"
        s, a = thresholds(n, L)
        row = Table1Row(n, s, a, prov, L, flag=SUSPECT_ROWS.get(n))
        if n in EMPIRICAL_L:
            row.eta_sym_empirical, row.eta_asym_empirical = thresholds(n, EMPIRICAL_L[n])
        rows.append(row)
    return rows
