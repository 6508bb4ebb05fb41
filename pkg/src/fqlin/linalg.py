"""Exact dense Gaussian elimination over GF(q), kernel structure, overlaps.

Rows are bit-packed for GF(2) (64 columns per word); other fields use
integer code arrays with modular arithmetic (prime q) or table lookups
(prime-power q).  Beyond rank/solvability this module computes kernel
bases, uniform solution sampling, the frozen/proportional-class
decomposition of the kernel, and overlap statistics of solution pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FqlinError
from .ensemble import SparseLinearSystem, pin_indices
from .gf import FiniteField


class NoSolution(FqlinError, ValueError):
    pass


class LengthMismatch(FqlinError, ValueError):
    pass


@dataclass
class KernelBasis:
    field: FiniteField
    n: int
    vectors: np.ndarray  # (nullity, n) element codes
    particular: np.ndarray | None  # a solution of A x = y, or None if unsolvable


class EliminationResult(NamedTuple):
    rank: int
    nullity: int
    basis: KernelBasis | None
    solvable: bool


def dense_matrix(system: SparseLinearSystem) -> tuple[np.ndarray, np.ndarray]:
    """Dense (A, y) code arrays for a sparse system."""
    A = np.zeros((system.m, system.n), dtype=np.uint8)
    y = np.zeros(system.m, dtype=np.uint8)
    for i, row in enumerate(system.rows):
        A[i, np.asarray(row.positions, dtype=np.int64) - 1] = row.coeffs
        y[i] = row.rhs
    return A, y


def matvec(system: SparseLinearSystem, x) -> np.ndarray:
    """A @ x over the system's field, exploiting row sparsity."""
    x = np.asarray(x)
    if x.shape != (system.n,):
        raise LengthMismatch(f"vector has shape {x.shape}, expected ({system.n},)")
    f = system.field
    y = np.zeros(system.m, dtype=np.uint8)
    by_weight: dict[int, list[int]] = {}
    for i, row in enumerate(system.rows):
        by_weight.setdefault(row.weight, []).append(i)
    for weight, idxs in by_weight.items():
        if weight == 0:
            continue
        P = np.array([system.rows[i].positions for i in idxs], dtype=np.int64) - 1
        C = np.array([system.rows[i].coeffs for i in idxs], dtype=np.uint8)
        y[idxs] = f.vsum(f.vmul(C, x[P]), axis=1)
    return y


# --- GF(2): bit-packed Jordan elimination -----------------------------


def _pack_gf2(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    m, n = A.shape
    ncols = n + 1
    words = (ncols + 63) // 64
    M = np.zeros((m, words), dtype=np.uint64)
    cols = np.arange(n)
    for w in range(words):
        sel = cols[(cols >> 6) == w]
        if sel.size:
            bits = A[:, sel].astype(np.uint64) << (sel & 63).astype(np.uint64)
            M[:, w] = np.bitwise_or.reduce(bits, axis=1)
    M[:, n >> 6] |= y.astype(np.uint64) << np.uint64(n & 63)
    return M


def _eliminate_gf2(A: np.ndarray, y: np.ndarray, with_basis: bool):
    m, n = A.shape
    M = _pack_gf2(A, y)
    pivots: list[int] = []
    r = 0
    for c in range(n):
        if r >= m:
            break
        w, b = c >> 6, np.uint64(c & 63)
        colbits = (M[:, w] >> b) & np.uint64(1)
        below = np.nonzero(colbits[r:])[0]
        if below.size == 0:
            continue
        p = r + int(below[0])
        if p != r:
            M[[r, p]] = M[[p, r]]
            colbits = (M[:, w] >> b) & np.uint64(1)
        others = np.nonzero(colbits)[0]
        others = others[others != r]
        if others.size:
            M[others] ^= M[r]
        pivots.append(c)
        r += 1
    rank = r

    rhs_w, rhs_b = n >> 6, np.uint64(n & 63)
    rhs_bits = (M[:, rhs_w] >> rhs_b) & np.uint64(1)
    solvable = not bool(rhs_bits[rank:].any())

    if not with_basis:
        return rank, pivots, None, None, solvable

    def column_bits(j: int, upto: int) -> np.ndarray:
        return ((M[:upto, j >> 6] >> np.uint64(j & 63)) & np.uint64(1)).astype(np.uint8)

    free = [c for c in range(n) if c not in set(pivots)]
    vectors = np.zeros((len(free), n), dtype=np.uint8)
    for jj, fc in enumerate(free):
        vectors[jj, fc] = 1
        if rank:
            vectors[jj, pivots] = column_bits(fc, rank)
    particular = None
    if solvable:
        particular = np.zeros(n, dtype=np.uint8)
        if rank:
            particular[pivots] = rhs_bits[:rank].astype(np.uint8)
    return rank, pivots, vectors, particular, solvable


# --- general GF(q) ----------------------------------------------------


def _eliminate_gfq(f: FiniteField, A: np.ndarray, y: np.ndarray, with_basis: bool):
    q = f.q
    m, n = A.shape
    dtype = np.int32 if f.e == 1 else np.int16
    W = np.concatenate([A, y[:, None]], axis=1).astype(dtype)

    def subtract(rows: np.ndarray, c: int, pivot_row: np.ndarray) -> None:
        factors = W[rows, c]
        if f.e == 1:
            W[rows, c:] = (W[rows, c:] - factors[:, None] * pivot_row) % q
        else:
            prod = f.vmul(factors[:, None].astype(np.int64), pivot_row)
            W[rows, c:] = f.vsub(W[rows, c:], prod)

    pivots: list[int] = []
    r = 0
    for c in range(n):
        if r >= m:
            break
        col = W[r:, c]
        nz = np.nonzero(col)[0]
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            W[[r, p]] = W[[p, r]]
        inv = f.inv(int(W[r, c]))
        if inv != 1:
            W[r, c:] = f.vmul_scalar(inv, W[r, c:].astype(np.int64))
        rows = r + 1 + np.nonzero(W[r + 1 :, c])[0]
        if rows.size:
            subtract(rows, c, W[r, c:].astype(np.int64))
        pivots.append(c)
        r += 1
    rank = r
    solvable = not bool(W[rank:, n].any())

    if not with_basis:
        return rank, pivots, None, None, solvable

    for i in range(rank - 1, -1, -1):
        c = pivots[i]
        rows = np.nonzero(W[:i, c])[0]
        if rows.size:
            subtract(rows, c, W[i, c:].astype(np.int64))

    free = [c for c in range(n) if c not in set(pivots)]
    vectors = np.zeros((len(free), n), dtype=np.uint8)
    piv_arr = np.asarray(pivots, dtype=np.int64)
    for jj, fc in enumerate(free):
        vectors[jj, fc] = 1
        if rank:
            vectors[jj, piv_arr] = f.vneg(W[:rank, fc].astype(np.int64)).astype(np.uint8)
    particular = None
    if solvable:
        particular = np.zeros(n, dtype=np.uint8)
        if rank:
            particular[piv_arr] = W[:rank, n].astype(np.uint8)
    return rank, pivots, vectors, particular, solvable


def eliminate(system: SparseLinearSystem, *, with_basis: bool = True) -> EliminationResult:
    """Gaussian elimination: rank, nullity, solvability, and (optionally)
    a kernel basis plus a particular solution."""
    A, y = dense_matrix(system)
    f = system.field
    if f.q == 2:
        rank, _, vectors, particular, solvable = _eliminate_gf2(A, y, with_basis)
    else:
        rank, _, vectors, particular, solvable = _eliminate_gfq(f, A, y, with_basis)
    nullity = system.n - rank
    basis = None
    if with_basis:
        basis = KernelBasis(field=f, n=system.n, vectors=vectors, particular=particular)
    return EliminationResult(rank=rank, nullity=nullity, basis=basis, solvable=solvable)


def sample_kernel_uniform(basis: KernelBasis, seed) -> np.ndarray:
    """A uniform sample from the solution set {particular + ker A}."""
    if basis.particular is None:
        raise NoSolution("system has no solution to sample from")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(int(seed))
    f = basis.field
    x = np.array(basis.particular, dtype=np.uint8, copy=True)
    nul = basis.vectors.shape[0]
    if nul == 0:
        return x
    coeffs = rng.integers(f.q, size=nul)
    if f.q == 2:
        sel = basis.vectors[coeffs == 1]
        if sel.shape[0]:
            x ^= np.bitwise_xor.reduce(sel, axis=0)
        return x
    prods = f.vmul(coeffs[:, None], basis.vectors)
    return f.vadd(x, f.vsum(prods, axis=0)).astype(np.uint8)


# --- kernel structure --------------------------------------------------


@dataclass
class KernelDecomposition:
    """Partition of the variables by their role in the kernel: frozen
    coordinates (zero in every kernel vector) and classes of coordinates
    that are non-zero scalar multiples of each other; coordinates in
    distinct classes are uniform and independent under a uniform kernel
    draw."""

    field: FiniteField
    n: int
    frozen: list[int]
    classes: list[list[int]]  # ordered by least member, which is the representative
    scalars: dict[int, int]  # x_j = scalars[j] * x_rep for j in the class of rep

    def class_of(self, j: int) -> int | None:
        for u, cls in enumerate(self.classes):
            if j in cls:
                return u
        return None


def decompose_kernel(basis: KernelBasis) -> KernelDecomposition:
    f = basis.field
    V = basis.vectors
    n = basis.n
    if V.shape[0] == 0:
        return KernelDecomposition(f, n, list(range(1, n + 1)), [], {})
    nz = V != 0
    col_any = nz.any(axis=0)
    first_nz = nz.argmax(axis=0)
    frozen: list[int] = []
    classes: list[list[int]] = []
    scalars: dict[int, int] = {}
    groups: dict[bytes, int] = {}
    rep_lead: list[int] = []
    for i in range(n):
        if not col_any[i]:
            frozen.append(i + 1)
            continue
        a = int(V[first_nz[i], i])
        key = f.vmul_scalar(f.inv(a), V[:, i]).astype(np.uint8).tobytes()
        g = groups.get(key)
        if g is None:
            groups[key] = len(classes)
            classes.append([i + 1])
            rep_lead.append(a)
            scalars[i + 1] = 1
        else:
            classes[g].append(i + 1)
            scalars[i + 1] = f.mul(a, f.inv(rep_lead[g]))
    return KernelDecomposition(f, n, frozen, classes, scalars)


def symmetry_defect(decomp: KernelDecomposition) -> float:
    """Sum over coordinate pairs of the total-variation distance between
    the joint kernel-marginal and the product of the marginals.

    Only same-class pairs contribute, each exactly 1 - 1/q, so the sum has
    the closed form (1 - 1/q) * sum_u C(|S_u|, 2)."""
    q = decomp.field.q
    pairs = sum(len(cls) * (len(cls) - 1) // 2 for cls in decomp.classes)
    return (1.0 - 1.0 / q) * pairs


def pinning_symmetry_experiment(
    system: SparseLinearSystem, T: int, epsilon: float, trials: int, seed: int
) -> float:
    """Fraction of trials in which freezing theta-1 random variables to zero
    (theta uniform in 1..T) leaves a kernel whose symmetry defect is below
    epsilon * n^2."""
    rng = np.random.default_rng(int(seed))
    n = system.n
    hits = 0
    for _ in range(trials):
        theta = int(rng.integers(1, T + 1))
        idx = rng.integers(1, n + 1, size=theta - 1)
        pinned = pin_indices(system, idx)
        res = eliminate(pinned)
        if symmetry_defect(decompose_kernel(res.basis)) < epsilon * n * n:
            hits += 1
    return hits / trials


# --- overlaps -----------------------------------------------------------


@dataclass
class OverlapMatrix:
    """Empirical joint distribution of coordinate values of two vectors."""

    q: int
    n: int
    counts: np.ndarray  # (q, q) integer counts, rows = first vector's value

    @property
    def freq(self) -> np.ndarray:
        return self.counts / self.n


def overlap(x, xp, q: int) -> OverlapMatrix:
    x = np.asarray(x)
    xp = np.asarray(xp)
    if x.ndim != 1 or x.shape != xp.shape:
        raise LengthMismatch(f"vectors have shapes {x.shape} and {xp.shape}")
    if x.size == 0:
        raise LengthMismatch("overlap of empty vectors is undefined")
    counts = np.bincount(x.astype(np.int64) * q + xp, minlength=q * q).reshape(q, q)
    return OverlapMatrix(q=q, n=x.size, counts=counts)


def overlap_tv(om: OverlapMatrix) -> float:
    """Total-variation distance between the overlap and the uniform matrix."""
    return 0.5 * float(np.abs(om.freq - 1.0 / om.q**2).sum())
