"""Finite detection efficiency and the Collins-Gisin (reduced) representation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from mcbell.correlations import IO_TOL, NORM_TOL, SignalingError, check_behavior, marginals


class Policy(str, enum.Enum):
    """What a party outputs when its detector does not fire."""

    LAST = "last"  # the all-ones composite outcome o-1
    EXTRA = "extra"  # a dedicated additional outcome o

    @classmethod
    def parse(cls, value) -> "Policy":
        if isinstance(value, cls):
            return value
        aliases = {"last": cls.LAST, "lastoutcome": cls.LAST, "extra": cls.EXTRA, "extraoutcome": cls.EXTRA}
        try:
            return aliases[str(value).lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown non-detection policy {value!r}") from None


@dataclass(frozen=True)
class EfficiencyModel:
    eta_a: float
    eta_b: float
    policy: Policy = Policy.LAST

    def __post_init__(self):
        for name in ("eta_a", "eta_b"):
            eta = getattr(self, name)
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"{name}={eta} outside [0, 1]")
        object.__setattr__(self, "policy", Policy.parse(self.policy))

    @classmethod
    def symmetric(cls, eta: float, policy=Policy.LAST) -> "EfficiencyModel":
        return cls(eta, eta, policy)

    @classmethod
    def asymmetric(cls, eta: float, policy=Policy.LAST) -> "EfficiencyModel":
        return cls(eta, 1.0, policy)


@dataclass(frozen=True, eq=False)
class DeflatedPoint:
    """The behavior observed with inefficient detectors.

    Under ``Policy.EXTRA`` the table has one more outcome per party than the
    ideal distribution it came from.
    """

    table: np.ndarray = field(repr=False)
    model: EfficiencyModel | None = None
    n: int | None = None

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        check_behavior(table, NORM_TOL)

    @property
    def m(self) -> int:
        return self.table.shape[2]

    @property
    def o(self) -> int:
        return self.table.shape[0]


def pad_outcome(table: np.ndarray) -> np.ndarray:
    """Append a zero-probability outcome to both parties."""
    o = table.shape[0]
    out = np.zeros((o + 1, o + 1) + table.shape[2:])
    out[:o, :o] = table
    return out


def deflate(dist, model: EfficiencyModel) -> DeflatedPoint:
    """Mix the ideal behavior with the three non-detection events.

    Each party's detector fires independently; a silent detector outputs the
    assigned outcome for every setting.
    """
    table = dist.table
    pa, pb = marginals(dist)
    ea, eb = model.eta_a, model.eta_b
    o = table.shape[0]
    ext = np.zeros((o + 1, o + 1) + table.shape[2:])
    ext[:o, :o] = ea * eb * table
    ext[:o, o] = ea * (1.0 - eb) * pa[:, :, None]
    ext[o, :o] = (1.0 - ea) * eb * pb[:, None, :]
    ext[o, o] = (1.0 - ea) * (1.0 - eb)
    if model.policy is Policy.LAST:
        # fold the no-click outcome into the last regular outcome
        ext[o - 1, :] += ext[o, :]
        ext[:, o - 1] += ext[:, o]
        ext = ext[:o, :o]
    return DeflatedPoint(ext, model, getattr(dist, "n", None))


def assigned_point(o: int, m: int) -> np.ndarray:
    """Deterministic behavior where both parties always output o-1."""
    table = np.zeros((o, o, m, m))
    table[o - 1, o - 1] = 1.0
    return table


@dataclass(frozen=True, eq=False)
class CollinsGisinPoint:
    """Reduced no-signaling representation.

    Row 0 / column 0 is the unit; row ``1 + x*(o-1) + a`` holds Alice's
    outcome ``a < o-1`` for setting ``x`` and likewise for Bob's columns.
    Interior entries are joint probabilities, border entries marginals.
    """

    matrix: np.ndarray = field(repr=False)
    m: int
    o: int
    policy: Policy | None = None

    def __post_init__(self):
        size = self.m * (self.o - 1) + 1
        if self.matrix.shape != (size, size):
            raise ValueError(f"expected a {size}x{size} matrix for m={self.m}, o={self.o}, got {self.matrix.shape}")

    def save(self, path) -> None:
        header = f"m={self.m} o={self.o} policy={self.policy.value if self.policy else 'none'}"
        np.savetxt(path, self.matrix, header=header, comments="# ", fmt="%.17g")

    @classmethod
    def load(cls, path) -> "CollinsGisinPoint":
        with open(path) as fh:
            header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        policy = None if meta.get("policy", "none") == "none" else Policy.parse(meta["policy"])
        return cls(np.loadtxt(path, ndmin=2), int(meta["m"]), int(meta["o"]), policy)


def cg_index(a: int, x: int, o: int) -> int:
    return 1 + x * (o - 1) + a


def to_collins_gisin(point) -> CollinsGisinPoint:
    table = point.table if hasattr(point, "table") else np.asarray(point)
    o, m = table.shape[0], table.shape[2]
    pa, pb = marginals(table)
    k = o - 1
    mat = np.empty((m * k + 1, m * k + 1))
    mat[0, 0] = 1.0
    mat[1:, 0] = pa[:k].T.ravel()  # x-major, then a
    mat[0, 1:] = pb[:k].T.ravel()
    # (a, b, x, y) -> (x, a, y, b)
    mat[1:, 1:] = table[:k, :k].transpose(2, 0, 3, 1).reshape(m * k, m * k)
    policy = point.model.policy if getattr(point, "model", None) is not None else None
    return CollinsGisinPoint(mat, m, o, policy)


def collins_gisin_to_table(cg: CollinsGisinPoint) -> np.ndarray:
    m, o, k = cg.m, cg.o, cg.o - 1
    mat = cg.matrix
    pa = mat[1:, 0].reshape(m, k).T  # (a, x)
    pb = mat[0, 1:].reshape(m, k).T  # (b, y)
    joint = mat[1:, 1:].reshape(m, k, m, k).transpose(1, 3, 0, 2)  # (a, b, x, y)
    table = np.empty((o, o, m, m))
    table[:k, :k] = joint
    table[:k, k] = pa[:, :, None] - joint.sum(axis=1)
    table[k, :k] = pb[:, None, :] - joint.sum(axis=0)
    table[k, k] = 1.0 - pa.sum(axis=0)[:, None] - pb.sum(axis=0)[None, :] + joint.sum(axis=(0, 1))
    return table


def from_collins_gisin(cg: CollinsGisinPoint, m: int | None = None, o: int | None = None) -> DeflatedPoint:
    if (m is not None and m != cg.m) or (o is not None and o != cg.o):
        raise ValueError(f"dimensions ({m}, {o}) do not match the matrix ({cg.m}, {cg.o})")
    table = collins_gisin_to_table(cg)
    if table.min() < -IO_TOL or table.max() > 1.0 + IO_TOL:
        raise SignalingError("reconstructed entry outside [0, 1]; not a valid reduced point")
    return DeflatedPoint(np.clip(table, 0.0, 1.0))
