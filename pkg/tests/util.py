"""Brute-force oracles shared across the test modules.

Everything here enumerates: kernels and solution sets by trying all q^n
vectors, row spans by trying all coefficient combinations.  Slow by
design, independent of the elimination code under test.
"""

from __future__ import annotations

import numpy as np

from fqlin.ensemble import SparseLinearSystem, SparseRow
from fqlin.gf import make_field
from fqlin.linalg import matvec


def all_vectors(q: int, n: int) -> np.ndarray:
    """All q^n code vectors as a (q^n, n) array (mixed-radix counting)."""
    total = q**n
    out = np.empty((total, n), dtype=np.uint8)
    idx = np.arange(total)
    for j in range(n):
        out[:, j] = (idx // q ** (n - 1 - j)) % q
    return out


def _brute_satisfying(system: SparseLinearSystem, homogeneous: bool) -> list[tuple[int, ...]]:
    f = system.field
    X = all_vectors(f.q, system.n)
    ok = np.ones(len(X), dtype=bool)
    for row in system.rows:
        cols = np.array(row.positions, dtype=np.int64) - 1
        vals = f.vsum(f.vmul(np.array(row.coeffs, dtype=np.uint8), X[:, cols]), axis=1)
        ok &= vals == (0 if homogeneous else row.rhs)
    return [tuple(int(c) for c in x) for x in X[ok]]


def brute_solutions(system: SparseLinearSystem) -> list[tuple[int, ...]]:
    """All solutions of the system, by exhausting q^n assignments."""
    return _brute_satisfying(system, homogeneous=False)


def brute_kernel(system: SparseLinearSystem) -> list[tuple[int, ...]]:
    return _brute_satisfying(system, homogeneous=True)


def brute_row_span_size(system: SparseLinearSystem) -> int:
    """Size of the row space of [A | y]-left part A, by enumerating all
    coefficient combinations of the rows."""
    f = system.field
    q = f.q
    A, _ = dense(system)
    span = {bytes(np.zeros(system.n, dtype=np.uint8))}
    for row in A:
        new = set()
        for v in span:
            vv = np.frombuffer(v, dtype=np.uint8)
            for c in range(q):
                new.add(bytes(f.vadd(vv, f.vmul_scalar(c, row)).astype(np.uint8)))
        span = new
    return len(span)


def dense(system: SparseLinearSystem) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((system.m, system.n), dtype=np.uint8)
    y = np.zeros(system.m, dtype=np.uint8)
    for i, row in enumerate(system.rows):
        A[i, np.array(row.positions, dtype=np.int64) - 1] = row.coeffs
        y[i] = row.rhs
    return A, y


def system_from_rows(q: int, n: int, rows: list[tuple[tuple[int, ...], tuple[int, ...], int]], k: int = 3):
    """Build a system from (positions, coeffs, rhs) triples; row weights are
    unconstrained, which the dense solver accepts."""
    f = make_field(q)
    return SparseLinearSystem(f, n, k, [SparseRow(p, c, r) for p, c, r in rows])


def random_sparse_system(rng: np.random.Generator, q: int, n: int, m: int, max_weight: int = 3):
    """A small random system with arbitrary row weights, for oracle tests."""
    f = make_field(q)
    rows = []
    for _ in range(m):
        w = int(rng.integers(1, max_weight + 1))
        w = min(w, n)
        pos = tuple(sorted(int(p) + 1 for p in rng.choice(n, size=w, replace=False)))
        coeffs = tuple(int(c) for c in rng.integers(1, q, size=w))
        rows.append(SparseRow(pos, coeffs, int(rng.integers(q))))
    return SparseLinearSystem(f, n, 3, rows)


def check_solution(system: SparseLinearSystem, x) -> bool:
    y = np.array([row.rhs for row in system.rows], dtype=np.uint8)
    return bool((matvec(system, np.asarray(x, dtype=np.uint8)) == y).all())
