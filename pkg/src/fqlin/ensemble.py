"""Random sparse linear systems over GF(q).

A system has m rows, each with k distinct sorted column positions, non-zero
coefficients drawn from a permutation-invariant distribution on (GF(q)*)^k,
and a uniform right-hand side.  The number of rows is Poisson with mean
d*n/k.  Also provides planted (satisfiable-by-construction) systems, pinning
of variables to zero, and a lossless text file format.

All sampling is deterministic given (params, seed): the row count and every
row draw from independent substreams keyed by (seed, tag, index), so trials
can be generated concurrently without reordering draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FqlinError
from .gf import FiniteField, NotAPrimePower, make_field

WEIGHT_TOL = 1e-12

# substream tags
_TAG_M = 0
_TAG_ROW = 1
_TAG_PLANT = 2
_TAG_GROUP_RHS = 3


class ThetaTooLarge(FqlinError, ValueError):
    pass


class ParseError(FqlinError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FieldMismatch(FqlinError, ValueError):
    pass


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator derived from a master seed and an index key."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def poisson_exact(rng: np.random.Generator, mean: float) -> int:
    """Exact Poisson draw: CDF inversion for small means, unit-rate
    exponential gap counting otherwise (no normal approximation)."""
    if mean <= 0:
        return 0
    if mean < 30:
        u = rng.random()
        p = math.exp(-mean)
        cdf, j = p, 0
        while u > cdf:
            j += 1
            p *= mean / j
            cdf += p
            if p == 0.0:  # deep tail, cdf saturated by round-off
                break
        return j
    count, total = 0, 0.0
    while True:
        gaps = rng.exponential(size=256)
        acc = total + np.cumsum(gaps)
        over = np.nonzero(acc > mean)[0]
        if over.size:
            return count + int(over[0])
        count += gaps.size
        total = float(acc[-1])


@dataclass(frozen=True)
class RowDistribution:
    """Distribution of the k non-zero coefficients of a row.

    Custom weights live on canonically sorted tuples of codes; a drawn tuple
    is uniformly shuffled, which enforces permutation invariance by
    construction rather than by validation.
    """

    kind: str  # "uniform" | "allones" | "custom"
    weights: tuple[tuple[tuple[int, ...], float], ...] | None = None

    @classmethod
    def uniform_nonzero(cls) -> "RowDistribution":
        return cls("uniform")

    @classmethod
    def all_ones(cls) -> "RowDistribution":
        return cls("allones")

    @classmethod
    def custom(cls, weights: dict[tuple[int, ...], float]) -> "RowDistribution":
        items = tuple(sorted((tuple(int(c) for c in key), float(w)) for key, w in weights.items()))
        dist = cls("custom", items)
        total = sum(w for _, w in items)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"custom weights sum to {total!r}, expected 1")
        if any(w < 0 for _, w in items):
            raise ValueError("custom weights must be non-negative")
        for key, _ in items:
            if tuple(sorted(key)) != key:
                raise ValueError(f"custom weight key {key} is not sorted")
        return dist

    def validate_for(self, q: int, k: int) -> None:
        if self.kind not in ("uniform", "allones", "custom"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "custom":
            for key, _ in self.weights:
                if len(key) != k:
                    raise ValueError(f"custom weight key {key} has length {len(key)}, expected k={k}")
                if any(not 1 <= c < q for c in key):
                    raise ValueError(f"custom weight key {key} has codes outside 1..{q - 1}")

    def draw_coeffs(self, rng: np.random.Generator, q: int, k: int) -> tuple[int, ...]:
        if self.kind == "allones":
            return (1,) * k
        if self.kind == "uniform":
            return tuple(int(c) for c in rng.integers(1, q, size=k))
        probs = np.array([w for _, w in self.weights])
        idx = rng.choice(len(self.weights), p=probs / probs.sum())
        key = self.weights[int(idx)][0]
        return tuple(key[int(i)] for i in rng.permutation(k))


@dataclass(frozen=True)
class SparseRow:
    """One equation: sum of coeffs[j] * x[positions[j]] = rhs (1-based positions)."""

    positions: tuple[int, ...]
    coeffs: tuple[int, ...]
    rhs: int
    pinned: bool = False

    @property
    def weight(self) -> int:
        return len(self.positions)

    def validate(self, n: int, q: int, k: int | None = None) -> None:
        if len(self.positions) != len(self.coeffs):
            raise ValueError("positions and coeffs have different lengths")
        if any(p2 <= p1 for p1, p2 in zip(self.positions, self.positions[1:])):
            raise ValueError(f"positions {self.positions} not strictly increasing")
        if self.positions and not (1 <= self.positions[0] and self.positions[-1] <= n):
            raise ValueError(f"positions {self.positions} out of range 1..{n}")
        if any(not 1 <= c < q for c in self.coeffs):
            raise ValueError(f"coefficients {self.coeffs} must be non-zero codes below {q}")
        if not 0 <= self.rhs < q:
            raise ValueError(f"rhs {self.rhs} out of range for GF({q})")
        if k is not None and not self.pinned and self.weight != k:
            raise ValueError(f"row weight {self.weight} != k={k}")
        if self.pinned and self.weight != 1:
            raise ValueError("pinning rows must have weight 1")


@dataclass
class SparseLinearSystem:
    field: FiniteField
    n: int
    k: int
    rows: list[SparseRow]

    @property
    def m(self) -> int:
        return len(self.rows)

    def validate(self, enforce_k: bool = True) -> None:
        for row in self.rows:
            row.validate(self.n, self.field.q, self.k if enforce_k else None)


@dataclass(frozen=True)
class EnsembleParams:
    q: int
    k: int
    n: int
    d: float
    dist: RowDistribution = field(default_factory=RowDistribution.uniform_nonzero)
    seed: int = 0

    def __post_init__(self):
        make_field(self.q)
        if self.k < 3:
            raise ValueError(f"k must be >= 3, got {self.k}")
        if self.n < self.k:
            raise ValueError(f"n must be >= k, got n={self.n}, k={self.k}")
        if not self.d > 0:
            raise ValueError(f"d must be positive, got {self.d}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        self.dist.validate_for(self.q, self.k)


def _sample_row(params: EnsembleParams, index: int) -> SparseRow:
    rng = substream(params.seed, _TAG_ROW, index)
    pos = np.sort(rng.choice(params.n, size=params.k, replace=False)) + 1
    coeffs = params.dist.draw_coeffs(rng, params.q, params.k)
    rhs = int(rng.integers(params.q))
    return SparseRow(tuple(int(p) for p in pos), coeffs, rhs)


def sample_row_count(params: EnsembleParams) -> int:
    return poisson_exact(substream(params.seed, _TAG_M), params.d * params.n / params.k)


def sample_system(params: EnsembleParams, *, m: int | None = None) -> SparseLinearSystem:
    """Draw a system from the ensemble; pass m to condition on the row count."""
    if m is None:
        m = sample_row_count(params)
    rows = [_sample_row(params, i) for i in range(m)]
    return SparseLinearSystem(make_field(params.q), params.n, params.k, rows)


def sample_planted(params: EnsembleParams, *, m: int | None = None) -> tuple[SparseLinearSystem, np.ndarray]:
    """Draw a system with the same matrix law but rhs = A @ x for a hidden
    uniform x, returned alongside.  The matrix equals sample_system's for
    the same params."""
    system = sample_system(params, m=m)
    f = system.field
    planted = substream(params.seed, _TAG_PLANT).integers(params.q, size=params.n).astype(np.uint8)
    rows = [
        replace(row, rhs=f.vdot(row.coeffs, planted[np.array(row.positions) - 1]))
        for row in system.rows
    ]
    return SparseLinearSystem(f, system.n, system.k, rows), planted


def pin_indices(system: SparseLinearSystem, indices) -> SparseLinearSystem:
    """Append one x_i = 0 row per index (weight-1 rows flagged as pinned)."""
    extra = []
    for i in indices:
        i = int(i)
        if not 1 <= i <= system.n:
            raise ValueError(f"pin index {i} out of range 1..{system.n}")
        extra.append(SparseRow((i,), (1,), 0, pinned=True))
    return SparseLinearSystem(system.field, system.n, system.k, system.rows + extra)


def pin(system: SparseLinearSystem, theta: int) -> SparseLinearSystem:
    """Freeze the first theta-1 variables to zero by appending pinning rows."""
    if theta < 1:
        raise ValueError(f"theta must be >= 1, got {theta}")
    if theta - 1 > system.n:
        raise ThetaTooLarge(f"theta-1 = {theta - 1} exceeds n = {system.n}")
    return pin_indices(system, range(1, theta))


# --- text file format -------------------------------------------------
#
#   fqlin q=<q> n=<n> k=<k> m=<m>
#   y=<code> <pos>:<code> ... <pos>:<code>      (k entries, positions ascending)
#   pin <pos>
#
# Element codes appear verbatim; positions are 1-based.


def write_system(system: SparseLinearSystem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"fqlin q={system.field.q} n={system.n} k={system.k} m={system.m}\n")
        for row in system.rows:
            if row.pinned:
                fh.write(f"pin {row.positions[0]}\n")
            else:
                cells = " ".join(f"{p}:{c}" for p, c in zip(row.positions, row.coeffs))
                fh.write(f"y={row.rhs} {cells}\n")


def _parse_header(line: str) -> dict[str, int]:
    parts = line.split()
    if len(parts) != 5 or parts[0] != "fqlin":
        raise ParseError("expected header 'fqlin q=<q> n=<n> k=<k> m=<m>'", 1)
    out = {}
    for part, name in zip(parts[1:], ("q", "n", "k", "m")):
        if not part.startswith(name + "="):
            raise ParseError(f"expected '{name}=<int>', got {part!r}", 1)
        try:
            out[name] = int(part[len(name) + 1 :])
        except ValueError:
            raise ParseError(f"bad integer in {part!r}", 1) from None
    return out


def read_system(path, *, field: FiniteField | None = None) -> SparseLinearSystem:
    """Parse a system file; raises ParseError (with line number) on malformed
    input and FieldMismatch when the header order disagrees with `field` or
    codes fall outside the field."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = _parse_header(lines[0])
    q, n, k, m = header["q"], header["n"], header["k"], header["m"]
    if field is not None and field.q != q:
        raise FieldMismatch(f"file is over GF({q}), expected GF({field.q})")
    try:
        f = make_field(q)
    except NotAPrimePower as exc:
        raise ParseError(str(exc), 1) from None

    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "pin":
            if len(parts) != 2:
                raise ParseError("pin line must be 'pin <pos>'", lineno)
            try:
                pos = int(parts[1])
            except ValueError:
                raise ParseError(f"bad pin position {parts[1]!r}", lineno) from None
            if not 1 <= pos <= n:
                raise ParseError(f"pin position {pos} out of range 1..{n}", lineno)
            rows.append(SparseRow((pos,), (1,), 0, pinned=True))
            continue
        if not parts[0].startswith("y="):
            raise ParseError(f"expected 'y=<code>' or 'pin', got {parts[0]!r}", lineno)
        try:
            rhs = int(parts[0][2:])
        except ValueError:
            raise ParseError(f"bad rhs {parts[0]!r}", lineno) from None
        if not 0 <= rhs < q:
            raise FieldMismatch(f"line {lineno}: rhs code {rhs} outside GF({q})")
        if len(parts) - 1 != k:
            raise ParseError(f"row has {len(parts) - 1} entries, expected k={k}", lineno)
        positions, coeffs = [], []
        for cell in parts[1:]:
            bits = cell.split(":")
            if len(bits) != 2:
                raise ParseError(f"expected '<pos>:<code>', got {cell!r}", lineno)
            try:
                pos, code = int(bits[0]), int(bits[1])
            except ValueError:
                raise ParseError(f"bad entry {cell!r}", lineno) from None
            if not 1 <= pos <= n:
                raise ParseError(f"position {pos} out of range 1..{n}", lineno)
            if positions and pos <= positions[-1]:
                raise ParseError(f"positions not strictly increasing at {pos}", lineno)
            if code == 0:
                raise ParseError("coefficient code 0 is not allowed", lineno)
            if not 0 < code < q:
                raise FieldMismatch(f"line {lineno}: coefficient code {code} outside GF({q})")
            positions.append(pos)
            coeffs.append(code)
        rows.append(SparseRow(tuple(positions), tuple(coeffs), rhs))
    if len(rows) != m:
        raise ParseError(f"header declares m={m} rows but file has {len(rows)}", len(lines))
    return SparseLinearSystem(f, n, k, rows)
