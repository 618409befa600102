"""SAT variants, string and box energies, random instances."""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from . import _kernels
from .errors import DomainError, MalformedInstanceError


class Kind(str, enum.Enum):
    ONE_IN_K = "one-in-k"
    KNAE = "k-nae"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        v = str(value).strip().lower().replace("_", "-")
        aliases = {"oneink": cls.ONE_IN_K, "1ink": cls.ONE_IN_K, "1-in-k": cls.ONE_IN_K,
                   "knae": cls.KNAE, "nae": cls.KNAE}
        if v in aliases:
            return aliases[v]
        return cls(v)


@dataclass(frozen=True)
class ProblemSpec:
    """Clause family and width.

    Attributes
    ----------
    kind : Kind
    K : int
        Clause width.
    zeta : tuple of float
        ``zeta[m]`` is 1 when a clause with ``m`` 1-bits is satisfied.
    """

    kind: Kind
    K: int
    zeta: tuple

    @property
    def zeta_array(self) -> np.ndarray:
        return np.asarray(self.zeta, dtype=float)

    @property
    def binom(self) -> np.ndarray:
        return comb(self.K, np.arange(self.K + 1))

    def uniform_M(self, gamma: float) -> np.ndarray:
        return gamma * self.binom / 2.0**self.K


def make_problem(kind, K: int) -> ProblemSpec:
    """Build the satisfaction coefficients of a clause family.

    Examples
    --------
    >>> make_problem("one-in-k", 3).zeta
    (0.0, 1.0, 0.0, 0.0)
    """
    kind = Kind.parse(kind)
    if int(K) != K or K < 2:
        raise DomainError(f"clause width must be an integer >= 2, got {K}")
    K = int(K)
    m = np.arange(K + 1)
    if kind is Kind.ONE_IN_K:
        z = (m == 1).astype(float)
    else:
        z = ((m != 0) & (m != K)).astype(float)
    return ProblemSpec(kind, K, tuple(float(x) for x in z))


@dataclass(frozen=True)
class MacroState:
    """Box coordinates: total spin ``q`` and clause-type densities ``Mm``."""

    q: float
    Mm: np.ndarray
    gamma: float = field(default=None)

    def __post_init__(self):
        Mm = np.asarray(self.Mm, dtype=float).copy()
        Mm.setflags(write=False)
        object.__setattr__(self, "Mm", Mm)
        total = float(Mm.sum())
        if self.gamma is None:
            object.__setattr__(self, "gamma", total)
        if np.any(Mm < 0):
            raise DomainError("clause-type densities must be nonnegative")
        if abs(total - self.gamma) > 1e-12 * max(1.0, abs(self.gamma)):
            raise DomainError(f"densities sum to {total}, expected gamma={self.gamma}")
        if not -1.0 <= self.q <= 1.0:
            raise DomainError(f"q={self.q} outside [-1, 1]")

    @property
    def K(self) -> int:
        return len(self.Mm) - 1

    @property
    def ones_fraction(self) -> float:
        return (1.0 - self.q) / 2.0

    def complement(self) -> "MacroState":
        return MacroState(-self.q, self.Mm[::-1], self.gamma)


@dataclass(frozen=True)
class Instance:
    """Random K-uniform hypergraph with ordered clauses.

    ``clauses`` holds 1-based variable indices, shape ``(M, K)``.
    """

    N: int
    K: int
    clauses: np.ndarray
    seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.clauses, dtype=np.int64).reshape(-1, self.K)
        if c.size and (c.min() < 1 or c.max() > self.N):
            raise MalformedInstanceError("clause entry outside [1, N]")
        c.setflags(write=False)
        object.__setattr__(self, "clauses", c)

    @property
    def M(self) -> int:
        return self.clauses.shape[0]

    @property
    def clauses0(self) -> np.ndarray:
        return self.clauses - 1

    def incidence(self) -> _kernels.Incidence:
        return _kernels.Incidence(self.clauses0, self.N)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"{self.N} {self.M} {self.K} {self.seed}\n")
        for row in self.clauses:
            out.write(" ".join(map(str, row)) + "\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Instance":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            N, M, K, seed = (int(x) for x in lines[0].split())
            rows = [[int(x) for x in ln.split()] for ln in lines[1:]]
        except (ValueError, IndexError) as exc:
            raise MalformedInstanceError(f"bad instance text: {exc}") from exc
        if len(rows) != M or any(len(r) != K for r in rows):
            raise MalformedInstanceError("clause count or width does not match header")
        return cls(N, K, np.array(rows, dtype=np.int64).reshape(M, K), seed)


def _check_string(inst: Instance, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (inst.N,):
        raise MalformedInstanceError(f"string length {z.shape} does not match N={inst.N}")
    if np.any((z != 0) & (z != 1)):
        raise MalformedInstanceError("string entries must be 0 or 1")
    return z


def energy_of_string(spec: ProblemSpec, inst: Instance, z) -> int:
    """Number of violated clauses."""
    z = _check_string(inst, z)
    if inst.K != spec.K:
        raise MalformedInstanceError("instance and problem clause widths differ")
    ones = _kernels.clause_ones(inst.clauses0, z)
    return int(np.count_nonzero(spec.zeta_array[ones] == 0))


def measure_box(spec: ProblemSpec, inst: Instance, z) -> MacroState:
    """Box coordinates of a string. Spins are ``sigma = 1 - 2 z``."""
    z = _check_string(inst, z)
    ones = _kernels.clause_ones(inst.clauses0, z)
    counts = np.bincount(ones, minlength=inst.K + 1)
    q = float(inst.N - 2 * z.sum()) / inst.N
    return MacroState(q, counts / inst.N, inst.M / inst.N)


def energy_of_box(spec: ProblemSpec, state: MacroState) -> float:
    return float(state.gamma - spec.zeta_array @ state.Mm)


def sample_instance(N: int, gamma: float, K: int, seed: int) -> Instance:
    """Draw ``round(gamma N)`` clauses with independent uniform entries.

    Repeated variables inside a clause are allowed. Python's ``round``
    rounds halves to even.
    """
    if N < K:
        raise DomainError(f"need N >= K, got N={N}, K={K}")
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    M = int(round(gamma * N))
    rng = np.random.default_rng(seed)
    clauses = rng.integers(1, N + 1, size=(M, K), dtype=np.int64)
    return Instance(N, K, clauses, seed)
