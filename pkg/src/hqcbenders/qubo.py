"""QUBO and Ising containers, energy evaluation and sample sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptySampleSet

DECISION = "decision"
COVERAGE = "coverage"
SLACK = "slack"
ROLES = (DECISION, COVERAGE, SLACK)


@dataclass
class Qubo:
    """``offset + sum_i linear[i] x_i + sum_{i<j} quadratic[(i, j)] x_i x_j``."""

    linear: np.ndarray
    quadratic: dict = field(default_factory=dict)
    offset: float = 0.0
    roles: Optional[list] = None
    labels: Optional[list] = None
    penalties: dict = field(default_factory=dict)

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).ravel()
        n = self.linear.size
        quad = {}
        for (i, j), v in self.quadratic.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("diagonal terms belong in linear")
            if i > j:
                i, j = j, i
            if not (0 <= i and j < n):
                raise DimensionMismatch(f"quadratic key ({i}, {j}) out of range for size {n}")
            quad[(i, j)] = quad.get((i, j), 0.0) + float(v)
        self.quadratic = quad
        self.offset = float(self.offset)
        if self.roles is None:
            self.roles = [DECISION] * n
        if len(self.roles) != n:
            raise DimensionMismatch("roles must cover every variable")
        bad = set(self.roles) - set(ROLES)
        if bad:
            raise ValueError(f"unknown roles {sorted(bad)}")
        if self.labels is None:
            self.labels = [f"x{i}" for i in range(n)]

    @property
    def size(self) -> int:
        return self.linear.size

    def indices(self, role: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.roles) if r == role], dtype=int)

    def upper_matrix(self) -> np.ndarray:
        """Dense upper-triangular Q with the linear terms on the diagonal."""
        Q = np.diag(self.linear)
        for (i, j), v in self.quadratic.items():
            Q[i, j] += v
        return Q

    def max_abs_coefficient(self) -> float:
        vals = [abs(v) for v in self.quadratic.values()]
        vals.extend(np.abs(self.linear).tolist())
        return max(vals, default=0.0)


def energy(q: Qubo, bits) -> float:
    x = np.asarray(bits, dtype=float).ravel()
    if x.size != q.size:
        raise DimensionMismatch(f"bitstring has {x.size} entries, QUBO has {q.size}")
    e = q.offset + float(q.linear @ x)
    for (i, j), v in q.quadratic.items():
        e += v * x[i] * x[j]
    return e


def energies(q: Qubo, X: np.ndarray) -> np.ndarray:
    """Vectorised energy over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != q.size:
        raise DimensionMismatch("sample matrix has the wrong width")
    out = q.offset + X @ q.linear
    if q.quadratic:
        ij = np.array(list(q.quadratic.keys()), dtype=int)
        v = np.array(list(q.quadratic.values()))
        out = out + (X[:, ij[:, 0]] * X[:, ij[:, 1]]) @ v
    return out


@dataclass
class IsingModel:
    h: np.ndarray
    J: dict
    offset: float = 0.0

    def energy(self, spins) -> float:
        s = np.asarray(spins, dtype=float).ravel()
        e = self.offset + float(self.h @ s)
        for (i, j), v in self.J.items():
            e += v * s[i] * s[j]
        return e


def qubo_to_ising(q: Qubo) -> IsingModel:
    """Substitute ``x = (s + 1) / 2``."""
    h = q.linear / 2.0
    J = {}
    offset = q.offset + q.linear.sum() / 2.0
    for (i, j), c in q.quadratic.items():
        J[(i, j)] = c / 4.0
        h[i] += c / 4.0
        h[j] += c / 4.0
        offset += c / 4.0
    return IsingModel(h, J, offset)


@dataclass(frozen=True)
class Timing:
    programming_us: float = 0.0
    anneal_us_per_read: float = 0.0
    readout_us_per_read: float = 0.0
    num_reads: int = 0

    @property
    def access_us(self) -> float:
        """Programming plus every anneal-read cycle."""
        return self.programming_us + self.num_reads * (
            self.anneal_us_per_read + self.readout_us_per_read)

    @property
    def anneal_us(self) -> float:
        return self.num_reads * self.anneal_us_per_read


class SampleSet:
    """Distinct bitstrings with energies and occurrence counts.

    Rows are kept sorted by energy, ties broken by the bitstring read as
    a binary word (variable 0 most significant).
    """

    def __init__(self, bits, energies_, occurrences=None, timing: Timing = Timing(),
                 info: Optional[dict] = None):
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim == 1:
            bits = bits.reshape(1, -1)
        e = np.asarray(energies_, dtype=float).ravel()
        occ = (np.ones(len(e), dtype=np.int64) if occurrences is None
               else np.asarray(occurrences, dtype=np.int64).ravel())
        if not (bits.shape[0] == e.size == occ.size):
            raise DimensionMismatch("bits, energies and occurrences disagree in length")
        order = _sort_order(bits, e)
        self.bits = bits[order]
        self.energies = e[order]
        self.occurrences = occ[order]
        self.timing = timing
        self.info = dict(info or {})

    @classmethod
    def from_reads(cls, q: Qubo, reads: np.ndarray, timing: Timing = Timing(),
                   info: Optional[dict] = None) -> "SampleSet":
        """Aggregate raw reads into distinct samples with exact energies."""
        reads = np.asarray(reads, dtype=np.uint8)
        if reads.ndim != 2 or reads.shape[0] == 0:
            raise EmptySampleSet("no reads to aggregate")
        uniq, counts = np.unique(reads, axis=0, return_counts=True)
        return cls(uniq, energies(q, uniq), counts, timing, info)

    def __len__(self):
        return self.energies.size

    @property
    def num_variables(self) -> int:
        return self.bits.shape[1]

    @property
    def lowest_energy(self) -> float:
        if not len(self):
            raise EmptySampleSet("sample set is empty")
        return float(self.energies[0])

    def records(self):
        for b, e, c in zip(self.bits, self.energies, self.occurrences):
            yield b, float(e), int(c)

    def same_samples(self, other: "SampleSet") -> bool:
        return (self.bits.shape == other.bits.shape
                and np.array_equal(self.bits, other.bits)
                and np.array_equal(self.energies, other.energies)
                and np.array_equal(self.occurrences, other.occurrences))


def bitstring(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def parse_bitstring(s: str) -> np.ndarray:
    if any(ch not in "01" for ch in s):
        raise ValueError(f"not a bitstring: {s!r}")
    return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")


def _sort_order(bits: np.ndarray, e: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary; rounding keeps float noise out of ties
    keys = [bits[:, k] for k in range(bits.shape[1] - 1, -1, -1)]
    keys.append(np.round(e, 9))
    return np.lexsort(keys)
